#pragma once

#include "motionseg/motion_model.hpp"

#include <json.hpp>

#include <filesystem>

namespace motionseg {

// {"kind": "affine"|"translation", "mu": [...], "cov": [[...], ...], "noise_var": x}
nlohmann::json prior_to_json(const MotionPrior& prior);
MotionPrior prior_from_json(const nlohmann::json& j);

void write_prior(const MotionPrior& prior, const std::filesystem::path& file);
// Throws FormatError for unreadable or malformed documents, InvalidArgument
// for well-formed priors that violate the invariants.
MotionPrior read_prior(const std::filesystem::path& file);

}  // namespace motionseg
