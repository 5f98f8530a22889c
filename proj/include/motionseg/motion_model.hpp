#pragma once

#include "motionseg/core.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace motionseg {

enum class MotionModelKind { Translation, Affine };

// 2 for translation, 6 for affine.
int parameter_count(MotionModelKind kind);
std::string to_string(MotionModelKind kind);
MotionModelKind parse_motion_model(const std::string& name);

/// Gaussian prior N(mean, cov) over motion parameters plus the isotropic
/// residual variance. Affine parameters are ordered
/// (a11, a12, tx, a21, a22, ty): x' = a11 x + a12 y + tx, y' = a21 x + a22 y + ty.
struct MotionPrior {
  MotionModelKind kind = MotionModelKind::Affine;
  Vector mean;
  Eigen::MatrixXd cov;
  double noise_var = 0.5;

  // Symmetry (1e-12), Cholesky, positive noise variance. Throws InvalidArgument.
  void validate() const;
  // tau^2 for an isotropic translation prior; throws if cov is not tau^2 * I.
  double translation_variance() const;
};

MotionPrior default_prior(MotionModelKind kind);
MotionPrior translation_prior(double tau2, double noise_var, double mean_x = 0.0,
                              double mean_y = 0.0);

// Parameters of the identity map: (1,0,0,0,1,0) for affine, (0,0) for translation.
Vector no_motion_theta(MotionModelKind kind);

std::pair<double, double> apply_motion(const Vector& theta, MotionModelKind kind, double x,
                                       double y);

// Pi_theta(Omega) - Omega evaluated on every lattice pixel.
FlowField model_flow(const Vector& theta, const Lattice& lattice, MotionModelKind kind);

enum class CoordinateOrigin {
  Lattice,         // raw pixel coordinates
  RegionCentroid,  // coordinates relative to the region centroid, as in the likelihood
};

struct LeastSquaresFit {
  Vector theta;
  double residual_rms = 0.0;
  Index pixels = 0;
};

// Ordinary least squares of the region's flow on its design matrix. Throws
// RankDeficient when the normal matrix is singular.
LeastSquaresFit least_squares_theta(const FlowField& flow, std::span<const Index> region,
                                    const Lattice& lattice, MotionModelKind kind,
                                    CoordinateOrigin origin = CoordinateOrigin::Lattice);

struct SequenceRecord;

struct CalibrationConfig {
  double foreground_threshold = 0.25;  // px; flow magnitude that counts as motion
  double edge_percentile = 0.90;       // Sobel magnitude cut among moving pixels
  Index min_region_pixels = 100;       // keep components strictly larger than this
  double residual_percentile = 0.90;
  bool eight_connected = false;
  double spd_jitter = 1e-6;
};

struct CalibrationReport {
  MotionPrior prior;
  std::vector<Vector> kept_thetas;
  Index candidate_regions = 0;
  Index no_motion_samples = 0;
};

// Data-driven prior covariance: Sobel flow edges (gradient norm over both
// flow components), moving-pixel foreground
// minus edges, connected components, per-component least squares with size
// and residual filters, then a sample covariance over the kept estimates plus
// one no-motion sample per sequence. Throws EstimationFailed if nothing survives.
CalibrationReport calibrate_prior(std::span<const SequenceRecord> sequences, MotionModelKind kind,
                                  const CalibrationConfig& config = {});

MotionPrior estimate_prior_covariance(std::span<const SequenceRecord> sequences,
                                      MotionModelKind kind, const CalibrationConfig& config = {});

// 3x3 Sobel gradient magnitude of a scalar raster, border replicated.
std::vector<double> sobel_magnitude(std::span<const double> field, int height, int width);

}  // namespace motionseg
