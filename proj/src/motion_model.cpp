#include "motionseg/motion_model.hpp"

#include "motionseg/errors.hpp"
#include "motionseg/metrics.hpp"
#include "motionseg/simulator.hpp"
#include "motionseg/stats_util.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>

namespace motionseg {

int parameter_count(MotionModelKind kind) { return kind == MotionModelKind::Affine ? 6 : 2; }

std::string to_string(MotionModelKind kind) {
  return kind == MotionModelKind::Affine ? "affine" : "translation";
}

MotionModelKind parse_motion_model(const std::string& name) {
  if (name == "affine") return MotionModelKind::Affine;
  if (name == "translation") return MotionModelKind::Translation;
  throw InvalidArgument("unknown motion model '" + name + "' (expected affine|translation)");
}

void MotionPrior::validate() const {
  const int d = parameter_count(kind);
  if (mean.size() != d) throw InvalidArgument("prior mean must have " + std::to_string(d) + " entries");
  if (cov.rows() != d || cov.cols() != d) {
    throw InvalidArgument("prior covariance must be " + std::to_string(d) + "x" + std::to_string(d));
  }
  if (!mean.allFinite() || !cov.allFinite()) throw InvalidArgument("prior has non-finite entries");
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
    throw InvalidArgument("prior covariance is not symmetric");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw InvalidArgument("prior covariance is not positive definite");
  if (!(noise_var > 0.0) || !std::isfinite(noise_var)) {
    throw InvalidArgument("noise variance must be positive");
  }
}

double MotionPrior::translation_variance() const {
  if (kind != MotionModelKind::Translation) throw InvalidArgument("not a translation prior");
  const double tau2 = cov(0, 0);
  if (std::abs(cov(1, 1) - tau2) > 1e-12 * std::max(1.0, tau2) || std::abs(cov(0, 1)) > 1e-12 ||
      std::abs(cov(1, 0)) > 1e-12) {
    throw InvalidArgument("translation prior covariance must be tau^2 * I");
  }
  return tau2;
}

Vector no_motion_theta(MotionModelKind kind) {
  if (kind == MotionModelKind::Translation) return Vector::Zero(2);
  Vector theta(6);
  theta << 1, 0, 0, 0, 1, 0;
  return theta;
}

MotionPrior default_prior(MotionModelKind kind) {
  if (kind == MotionModelKind::Translation) return translation_prior(0.5, 0.5);
  MotionPrior prior;
  prior.kind = MotionModelKind::Affine;
  prior.mean = no_motion_theta(kind);
  prior.cov = Eigen::MatrixXd::Zero(6, 6);
  prior.cov.diagonal() << 0.005, 0.05, 15.0, 0.05, 0.005, 15.0;
  prior.noise_var = 0.5;
  return prior;
}

MotionPrior translation_prior(double tau2, double noise_var, double mean_x, double mean_y) {
  MotionPrior prior;
  prior.kind = MotionModelKind::Translation;
  prior.mean = Vector(2);
  prior.mean << mean_x, mean_y;
  prior.cov = tau2 * Eigen::MatrixXd::Identity(2, 2);
  prior.noise_var = noise_var;
  prior.validate();
  return prior;
}

static void check_theta(const Vector& theta, MotionModelKind kind) {
  if (theta.size() != parameter_count(kind)) {
    throw InvalidArgument(to_string(kind) + " motion needs " + std::to_string(parameter_count(kind)) +
                          " parameters, got " + std::to_string(theta.size()));
  }
}

std::pair<double, double> apply_motion(const Vector& theta, MotionModelKind kind, double x, double y) {
  check_theta(theta, kind);
  if (kind == MotionModelKind::Translation) return {x + theta[0], y + theta[1]};
  return {theta[0] * x + theta[1] * y + theta[2], theta[3] * x + theta[4] * y + theta[5]};
}

FlowField model_flow(const Vector& theta, const Lattice& lattice, MotionModelKind kind) {
  check_theta(theta, kind);
  FlowField flow = FlowField::zeros(lattice.size());
  for (Index i = 0; i < lattice.size(); ++i) {
    const auto [px, py] = apply_motion(theta, kind, lattice.x(i), lattice.y(i));
    flow.u[i] = px - lattice.x(i);
    flow.v[i] = py - lattice.y(i);
  }
  return flow;
}

LeastSquaresFit least_squares_theta(const FlowField& flow, std::span<const Index> region,
                                    const Lattice& lattice, MotionModelKind kind,
                                    CoordinateOrigin origin) {
  check_flow(flow, lattice);
  const Index n = static_cast<Index>(region.size());
  LeastSquaresFit fit;
  fit.pixels = n;
  if (n == 0) throw RankDeficient("least squares on an empty region");

  if (kind == MotionModelKind::Translation) {
    double mu = 0.0, mv = 0.0;
    for (Index i : region) {
      mu += flow.u[i];
      mv += flow.v[i];
    }
    mu /= static_cast<double>(n);
    mv /= static_cast<double>(n);
    double sq = 0.0;
    for (Index i : region) sq += (flow.u[i] - mu) * (flow.u[i] - mu) + (flow.v[i] - mv) * (flow.v[i] - mv);
    fit.theta = Vector(2);
    fit.theta << mu, mv;
    fit.residual_rms = std::sqrt(sq / (2.0 * static_cast<double>(n)));
    return fit;
  }

  double ox = 0.0, oy = 0.0;
  if (origin == CoordinateOrigin::RegionCentroid) {
    for (Index i : region) {
      ox += lattice.x(i);
      oy += lattice.y(i);
    }
    ox /= static_cast<double>(n);
    oy /= static_cast<double>(n);
  }
  Eigen::MatrixXd design(n, 3);
  Eigen::MatrixXd rhs(n, 2);
  for (Index r = 0; r < n; ++r) {
    const Index i = region[static_cast<size_t>(r)];
    design(r, 0) = lattice.x(i) - ox;
    design(r, 1) = lattice.y(i) - oy;
    design(r, 2) = 1.0;
    rhs(r, 0) = flow.u[i];
    rhs(r, 1) = flow.v[i];
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  qr.setThreshold(1e-10);
  if (qr.rank() < 3) {
    throw RankDeficient("affine least squares is rank deficient on a " + std::to_string(n) +
                        "-pixel region");
  }
  const Eigen::MatrixXd coef = qr.solve(rhs);
  const Eigen::MatrixXd residual = design * coef - rhs;
  fit.residual_rms = std::sqrt(residual.squaredNorm() / (2.0 * static_cast<double>(n)));
  // Flow is Pi_theta(x) - x, so the diagonal terms carry the +1.
  fit.theta = Vector(6);
  fit.theta << coef(0, 0) + 1.0, coef(1, 0), coef(2, 0), coef(0, 1), coef(1, 1) + 1.0, coef(2, 1);
  return fit;
}

std::vector<double> sobel_magnitude(std::span<const double> field, int height, int width) {
  auto at = [&](int r, int c) {
    r = std::clamp(r, 0, height - 1);
    c = std::clamp(c, 0, width - 1);
    return field[static_cast<size_t>(r) * width + c];
  };
  std::vector<double> out(field.size());
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      const double gx = (at(r - 1, c + 1) + 2 * at(r, c + 1) + at(r + 1, c + 1)) -
                        (at(r - 1, c - 1) + 2 * at(r, c - 1) + at(r + 1, c - 1));
      const double gy = (at(r + 1, c - 1) + 2 * at(r + 1, c) + at(r + 1, c + 1)) -
                        (at(r - 1, c - 1) + 2 * at(r - 1, c) + at(r - 1, c + 1));
      out[static_cast<size_t>(r) * width + c] = std::hypot(gx, gy);
    }
  }
  return out;
}

namespace {

struct Candidate {
  Vector theta;
  double residual;
};

void collect_candidates(const FlowField& flow, const Lattice& lattice, MotionModelKind kind,
                        const CalibrationConfig& config, std::vector<Candidate>& out,
                        Index& regions) {
  const Index n = lattice.size();
  std::vector<double> magnitude(static_cast<size_t>(n));
  for (Index i = 0; i < n; ++i) magnitude[static_cast<size_t>(i)] = std::hypot(flow.u[i], flow.v[i]);
  const std::vector<double> edges_u =
      sobel_magnitude(std::span<const double>(flow.u.data(), static_cast<size_t>(n)), lattice.height(), lattice.width());
  const std::vector<double> edges_v =
      sobel_magnitude(std::span<const double>(flow.v.data(), static_cast<size_t>(n)), lattice.height(), lattice.width());
  std::vector<double> edges(static_cast<size_t>(n));
  for (size_t i = 0; i < edges.size(); ++i) edges[i] = std::hypot(edges_u[i], edges_v[i]);

  std::vector<double> moving_edges;
  for (Index i = 0; i < n; ++i) {
    if (magnitude[static_cast<size_t>(i)] > config.foreground_threshold) {
      moving_edges.push_back(edges[static_cast<size_t>(i)]);
    }
  }
  if (moving_edges.empty()) return;
  const double edge_cut = percentile(moving_edges, config.edge_percentile);

  std::vector<int> candidate(static_cast<size_t>(n), -1);
  for (Index i = 0; i < n; ++i) {
    const auto s = static_cast<size_t>(i);
    if (magnitude[s] > config.foreground_threshold && !(edges[s] > edge_cut)) candidate[s] = 1;
  }
  const ComponentLabels components =
      connected_components(candidate, lattice.height(), lattice.width(),
                           config.eight_connected ? Connectivity::Eight : Connectivity::Four);
  std::vector<std::vector<Index>> members(static_cast<size_t>(components.count));
  for (Index i = 0; i < n; ++i) {
    const int id = components.ids[static_cast<size_t>(i)];
    if (id >= 0) members[static_cast<size_t>(id)].push_back(i);
  }
  for (const auto& region : members) {
    if (static_cast<Index>(region.size()) <= config.min_region_pixels) continue;
    ++regions;
    try {
      const LeastSquaresFit fit =
          least_squares_theta(flow, region, lattice, kind, CoordinateOrigin::RegionCentroid);
      out.push_back({fit.theta, fit.residual_rms});
    } catch (const RankDeficient&) {
      // Degenerate strip; contributes nothing.
    }
  }
}

}  // namespace

CalibrationReport calibrate_prior(std::span<const SequenceRecord> sequences, MotionModelKind kind,
                                  const CalibrationConfig& config) {
  if (sequences.empty()) throw InvalidArgument("calibration needs at least one sequence");
  std::vector<Candidate> candidates;
  CalibrationReport report;
  for (const SequenceRecord& seq : sequences) {
    if (seq.forward.empty()) throw InvalidArgument("calibration sequence has no flow");
    const Lattice lattice(seq.height, seq.width);
    for (const FlowField& flow : seq.forward) {
      collect_candidates(flow, lattice, kind, config, candidates, report.candidate_regions);
    }
  }
  if (candidates.empty()) {
    throw EstimationFailed("no moving region larger than " + std::to_string(config.min_region_pixels) +
                           " pixels was found");
  }
  std::vector<double> residuals;
  residuals.reserve(candidates.size());
  for (const auto& c : candidates) residuals.push_back(c.residual);
  const double residual_cut = percentile(residuals, config.residual_percentile);
  for (const auto& c : candidates) {
    if (c.residual <= residual_cut) report.kept_thetas.push_back(c.theta);
  }

  const int d = parameter_count(kind);
  report.no_motion_samples = static_cast<Index>(sequences.size());
  std::vector<Vector> samples = report.kept_thetas;
  for (Index i = 0; i < report.no_motion_samples; ++i) samples.push_back(no_motion_theta(kind));

  Vector mean = Vector::Zero(d);
  for (const auto& s : samples) mean += s;
  mean /= static_cast<double>(samples.size());
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
  for (const auto& s : samples) cov += (s - mean) * (s - mean).transpose();
  cov /= static_cast<double>(std::max<size_t>(samples.size() - 1, 1));

  MotionPrior prior = default_prior(kind);
  if (kind == MotionModelKind::Translation) {
    const double tau2 = 0.5 * (cov(0, 0) + cov(1, 1)) + config.spd_jitter;
    prior.cov = tau2 * Eigen::MatrixXd::Identity(2, 2);
  } else {
    prior.cov = 0.5 * (cov + cov.transpose()) + config.spd_jitter * Eigen::MatrixXd::Identity(d, d);
  }
  prior.validate();
  report.prior = prior;
  return report;
}

MotionPrior estimate_prior_covariance(std::span<const SequenceRecord> sequences, MotionModelKind kind,
                                      const CalibrationConfig& config) {
  return calibrate_prior(sequences, kind, config).prior;
}

}  // namespace motionseg
