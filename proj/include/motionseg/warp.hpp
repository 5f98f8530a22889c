#pragma once

#include "motionseg/core.hpp"

#include <cstdint>
#include <span>

namespace motionseg {

/// RGB image, 3 x n values in [0, 1].
struct Frame {
  RowMatrix channels;

  Frame() = default;
  explicit Frame(RowMatrix values);

  Index n() const { return channels.cols(); }

  // Interleaved 8-bit RGB, row-major.
  static Frame from_rgb8(std::span<const std::uint8_t> rgb, const Lattice& lattice);
};

struct WarpPair {
  FlowField forward;   // frame 1 -> frame 2
  FlowField backward;  // frame 2 -> frame 1
};

// Bilinear interpolation of a row-major raster with clamp-to-border.
double bilinear_sample(std::span<const double> field, const Lattice& lattice, double qx, double qy);
Vector bilinear_sample(std::span<const double> field, const Lattice& lattice,
                       std::span<const double> qx, std::span<const double> qy);

// result(p) = quantity sampled at p + flow(p).
Frame warp_by_flow(const Frame& frame, const FlowField& flow, const Lattice& lattice);
// Rows are renormalized to the simplex after sampling.
SoftMaskStack warp_by_flow(const SoftMaskStack& masks, const FlowField& flow, const Lattice& lattice);

// 1 - e / max(e) with e the channel-mean absolute difference; all ones if a == b.
Vector photometric_weight(const Frame& a, const Frame& b);

// 0.5 KL(p||q) + 0.5 KL(q||p) per pixel, both floored and renormalized.
Vector symmetric_kl(const RowMatrix& p, const RowMatrix& q, double prob_floor);

struct WarpLossResult {
  double value = 0.0;
  RowMatrix grad1;  // d value / d masks1
  RowMatrix grad2;  // d value / d masks2
};

double warp_loss(const Frame& frame1, const Frame& frame2, const WarpPair& pair,
                 const SoftMaskStack& masks1, const SoftMaskStack& masks2, const Lattice& lattice,
                 double prob_floor = 1e-8);

WarpLossResult warp_loss_with_gradient(const Frame& frame1, const Frame& frame2,
                                       const WarpPair& pair, const SoftMaskStack& masks1,
                                       const SoftMaskStack& masks2, const Lattice& lattice,
                                       double prob_floor = 1e-8);

}  // namespace motionseg
