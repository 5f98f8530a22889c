#pragma once

#include "motionseg/core.hpp"
#include "motionseg/motion_model.hpp"

#include <array>
#include <span>

namespace motionseg {

/// Weighted sufficient statistics of one region. Coordinates are centered on
/// the region centroid and the flow is centered on the prior mean motion
/// evaluated at those coordinates; every inner product is weighted by the
/// region's mask.
struct RegionStats {
  double n = 0.0;
  double centroid_x = 0.0;
  double centroid_y = 0.0;
  std::array<std::array<double, 3>, 3> gram{};  // G^T G over (x, y, 1)
  std::array<double, 3> h{};                    // centered u against (x, y, 1)
  std::array<double, 3> r{};                    // centered v against (x, y, 1)
  double ff = 0.0;                              // F^T F
};

struct RegionLikelihoodParts {
  double log_det_ratio = 0.0;  // log(det S_k / det Lambda)
  double correction = 0.0;     // F^T P S^-1 P^T F
  double d2 = 0.0;             // ff - correction / sigma^2
  double contribution = 0.0;   // 0.5 log_det_ratio + d2 / (2 sigma^2)
};

// Regions whose mass falls below this contribute exactly zero.
inline constexpr double kEmptyRegionMass = 1e-8;

RegionStats region_stats(const FlowField& flow, std::span<const double> mask, const Lattice& lattice,
                         const MotionPrior& prior);

// Affine-prior decomposition of one region via 3x3 Schur complements.
RegionLikelihoodParts affine_region_parts(const RegionStats& stats, const MotionPrior& prior,
                                          int region = 0);

// -log p(f | m) under an affine prior, computed from RegionStats.
double nll_affine(const FlowField& flow, const SoftMaskStack& masks, const Lattice& lattice,
                  const MotionPrior& prior);

// -log p(f | m) under an isotropic translation prior (weighted-mean form).
double nll_translation(const FlowField& flow, const SoftMaskStack& masks, const Lattice& lattice,
                       const MotionPrior& prior);

// The same likelihood written before the w_k substitution. Agrees with
// nll_translation whenever masks are one-hot.
double nll_translation_unweighted(const FlowField& flow, const SoftMaskStack& masks,
                                  const Lattice& lattice, const MotionPrior& prior);

// Dispatches on prior.kind.
double nll(const FlowField& flow, const SoftMaskStack& masks, const Lattice& lattice,
           const MotionPrior& prior);

struct NllGradient {
  double value = 0.0;
  RowMatrix grad;  // d value / d mask weight, K x n
};

NllGradient nll_with_gradient(const FlowField& flow, const SoftMaskStack& masks,
                              const Lattice& lattice, const MotionPrior& prior);

inline constexpr Index kOracleMaxRegionPixels = 2000;

// Brute-force marginal likelihood: materializes each region's design matrix
// and factors the dense 2n_k x 2n_k covariance P Sigma P^T + sigma^2 I.
double nll_oracle(const FlowField& flow, const HardMaskStack& masks, const Lattice& lattice,
                  const MotionPrior& prior, Index max_region_pixels = kOracleMaxRegionPixels);

// Raw moments of a hard region in lattice coordinates. Moments of disjoint
// pixel sets add, so regions can be edited one pixel or component at a time.
struct RegionMoments {
  std::array<double, 13> m{};

  RegionMoments& operator+=(const RegionMoments& o) {
    for (size_t i = 0; i < m.size(); ++i) m[i] += o.m[i];
    return *this;
  }
  RegionMoments& operator-=(const RegionMoments& o) {
    for (size_t i = 0; i < m.size(); ++i) m[i] -= o.m[i];
    return *this;
  }
  double count() const { return m[0]; }
};

// Scores hard partitions: nll of one-hot masks equals constant() plus the sum
// of region_term over the regions.
class HardPartitionScorer {
 public:
  HardPartitionScorer(const FlowField& flow, const Lattice& lattice, const MotionPrior& prior);

  RegionMoments pixel(Index i) const;
  RegionMoments region(std::span<const int> labels, int label) const;
  double region_term(const RegionMoments& moments) const;
  double constant() const { return constant_; }
  double total(std::span<const int> labels, int k) const;

 private:
  const FlowField& flow_;
  const Lattice& lattice_;
  MotionPrior prior_;
  double constant_ = 0.0;
  std::array<double, 6> centering_{};
  std::array<double, 36> blocks_{};
  double log_det_precision_ = 0.0;
};

// Per-region mean-flow baseline with no parameter prior.
double nll_simple_mean(const FlowField& flow, const SoftMaskStack& masks, double noise_var);

}  // namespace motionseg
