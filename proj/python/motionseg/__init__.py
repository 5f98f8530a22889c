"""Motion-pattern segmentation from optical flow."""

from ._core import (
    Error,
    FormatError,
    InvalidArgument,
    MotionPrior,
    NumericalError,
    default_prior,
    fg_ari,
    fit,
    generate,
    hungarian,
    kl_to_uniform,
    miou,
    nll,
    nll_oracle,
    postprocess,
    read_prior,
    read_sequence,
    run_cli,
    translation_prior,
    write_prior,
)

__all__ = [
    "Error",
    "FormatError",
    "InvalidArgument",
    "MotionPrior",
    "NumericalError",
    "default_prior",
    "fg_ari",
    "fit",
    "generate",
    "hungarian",
    "kl_to_uniform",
    "miou",
    "nll",
    "nll_oracle",
    "postprocess",
    "read_prior",
    "read_sequence",
    "run_cli",
    "translation_prior",
    "write_prior",
]
