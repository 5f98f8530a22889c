#include "motionseg/likelihood.hpp"

#include "motionseg/detail/dual.hpp"
#include "motionseg/detail/mat3.hpp"
#include "motionseg/errors.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <numbers>
#include <vector>

namespace motionseg {

using detail::Dual;
using detail::Mat3;
using detail::Vec3;

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

// Mean-motion field of the prior written as u = a x + b y + c, v = d x + e y + f
// in region-centered coordinates.
struct Centering {
  double a = 0, b = 0, c = 0, d = 0, e = 0, f = 0;
};

Centering centering_of(const MotionPrior& prior) {
  const Vector& mu = prior.mean;
  if (prior.kind == MotionModelKind::Translation) return {0, 0, mu[0], 0, 0, mu[1]};
  return {mu[0] - 1.0, mu[1], mu[2], mu[3], mu[4] - 1.0, mu[5]};
}

struct AffineBlocks {
  Mat3<double> alpha, beta, gamma, delta;
  double log_det_precision = 0.0;
};

AffineBlocks affine_blocks(const MotionPrior& prior) {
  Eigen::LLT<Eigen::MatrixXd> llt(prior.cov);
  const Eigen::MatrixXd precision = llt.solve(Eigen::MatrixXd::Identity(6, 6));
  AffineBlocks blocks;
  double log_det_cov = 0.0;
  for (int i = 0; i < 6; ++i) log_det_cov += 2.0 * std::log(llt.matrixL()(i, i));
  blocks.log_det_precision = -log_det_cov;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      blocks.alpha(i, j) = precision(i, j);
      blocks.beta(i, j) = precision(i, j + 3);
      blocks.gamma(i, j) = precision(i + 3, j);
      blocks.delta(i, j) = precision(i + 3, j + 3);
    }
  }
  return blocks;
}

// Weighted raw moments of one region, coordinates taken relative to `origin`.
enum Moment { kM0, kMx, kMy, kMxx, kMxy, kMyy, kMu, kMv, kMux, kMuy, kMvx, kMvy, kMff, kMomentCount };

template <typename T>
using Moments = std::array<T, kMomentCount>;

struct Origin {
  double x = 0.0;
  double y = 0.0;
};

// Per-pixel features whose mask-weighted sums form the moments.
inline std::array<double, kMomentCount> features(double x, double y, double u, double v) {
  return {1.0, x, y, x * x, x * y, y * y, u, v, u * x, u * y, v * x, v * y, u * u + v * v};
}

Origin mask_centroid(std::span<const double> mask, const Lattice& lattice, double& mass) {
  double m0 = 0.0, mx = 0.0, my = 0.0;
  for (Index i = 0; i < lattice.size(); ++i) {
    const double w = mask[static_cast<size_t>(i)];
    m0 += w;
    mx += w * lattice.x(i);
    my += w * lattice.y(i);
  }
  mass = m0;
  if (m0 < kEmptyRegionMass) return {};
  return {mx / m0, my / m0};
}

Moments<double> accumulate(const FlowField& flow, std::span<const double> mask,
                           const Lattice& lattice, Origin origin) {
  Moments<double> m{};
  for (Index i = 0; i < lattice.size(); ++i) {
    const double w = mask[static_cast<size_t>(i)];
    if (w == 0.0) continue;
    const auto phi = features(lattice.x(i) - origin.x, lattice.y(i) - origin.y, flow.u[i], flow.v[i]);
    for (int j = 0; j < kMomentCount; ++j) m[j] += w * phi[j];
  }
  return m;
}

template <typename T>
struct Centered {
  T n, cx, cy;
  Mat3<T> gram;
  Vec3<T> h, r;
  T ff;
};

// Centered statistics as a function of the raw moments. The expansions hold
// for any origin, which keeps derivatives through the centroid exact.
template <typename T>
Centered<T> center(const Moments<T>& m, const Centering& c) {
  Centered<T> s;
  const T n = m[kM0];
  const T xc = m[kMx] / n;
  const T yc = m[kMy] / n;
  const T sx = m[kMx] - xc * n;
  const T sy = m[kMy] - yc * n;
  const T cxx = m[kMxx] - 2.0 * xc * m[kMx] + xc * xc * n;
  const T cxy = m[kMxy] - xc * m[kMy] - yc * m[kMx] + xc * yc * n;
  const T cyy = m[kMyy] - 2.0 * yc * m[kMy] + yc * yc * n;
  const T cux = m[kMux] - xc * m[kMu];
  const T cuy = m[kMuy] - yc * m[kMu];
  const T cvx = m[kMvx] - xc * m[kMv];
  const T cvy = m[kMvy] - yc * m[kMv];

  s.n = n;
  s.cx = xc;
  s.cy = yc;
  s.gram(0, 0) = cxx;
  s.gram(0, 1) = cxy;
  s.gram(0, 2) = sx;
  s.gram(1, 0) = cxy;
  s.gram(1, 1) = cyy;
  s.gram(1, 2) = sy;
  s.gram(2, 0) = sx;
  s.gram(2, 1) = sy;
  s.gram(2, 2) = n;

  s.h = {cux - c.a * cxx - c.b * cxy - c.c * sx, cuy - c.a * cxy - c.b * cyy - c.c * sy,
         m[kMu] - c.a * sx - c.b * sy - c.c * n};
  s.r = {cvx - c.d * cxx - c.e * cxy - c.f * sx, cvy - c.d * cxy - c.e * cyy - c.f * sy,
         m[kMv] - c.d * sx - c.e * sy - c.f * n};

  const T mean_u_sq = c.a * c.a * cxx + 2.0 * c.a * c.b * cxy + c.b * c.b * cyy +
                      2.0 * c.a * c.c * sx + 2.0 * c.b * c.c * sy + c.c * c.c * n;
  const T mean_v_sq = c.d * c.d * cxx + 2.0 * c.d * c.e * cxy + c.e * c.e * cyy +
                      2.0 * c.d * c.f * sx + 2.0 * c.e * c.f * sy + c.f * c.f * n;
  s.ff = m[kMff] - 2.0 * (c.a * cux + c.b * cuy + c.c * m[kMu]) -
         2.0 * (c.d * cvx + c.e * cvy + c.f * m[kMv]) + mean_u_sq + mean_v_sq;
  return s;
}

template <typename T>
Mat3<T> lift(const Mat3<double>& m) {
  Mat3<T> r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r(i, j) = T(m(i, j));
  return r;
}

template <typename T>
struct Parts {
  T log_det_ratio, correction, d2, contribution;
};

// S = [K+alpha, beta; gamma, K+delta] with K = G^T G / sigma^2. The
// determinant and inverse go through the Schur complement of the lower-right
// block, so only 3x3 inverses appear.
template <typename T>
Parts<T> affine_parts(const Centered<T>& s, const AffineBlocks& blocks, double sigma2, int region) {
  using std::log;
  Mat3<T> k;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) k(i, j) = s.gram(i, j) / sigma2;
  const Mat3<T> beta = lift<T>(blocks.beta);
  const Mat3<T> gamma = lift<T>(blocks.gamma);
  const Mat3<T> top_left = k + lift<T>(blocks.alpha);
  const Mat3<T> bottom_right = k + lift<T>(blocks.delta);

  const T det_br = detail::det(bottom_right);
  if (!(detail::value_of(det_br) > 0.0) || !std::isfinite(detail::value_of(det_br))) {
    throw IllConditioned("likelihood matrix S_k is not positive definite", region);
  }
  const Mat3<T> br_inv = detail::inverse(bottom_right, det_br);
  const Mat3<T> schur = top_left - beta * br_inv * gamma;
  const T det_schur = detail::det(schur);
  if (!(detail::value_of(det_schur) > 0.0) || !std::isfinite(detail::value_of(det_schur))) {
    throw IllConditioned("likelihood matrix S_k is not positive definite", region);
  }
  const Mat3<T> a = detail::inverse(schur, det_schur);
  const Mat3<T> b = a * beta * br_inv;           // negated upper-right block
  const Mat3<T> c = br_inv * gamma * a;          // negated lower-left block
  const Mat3<T> d = br_inv + c * beta * br_inv;  // lower-right block

  const T correction = detail::bilinear(s.h, a, s.h) - detail::bilinear(s.h, b, s.r) -
                       detail::bilinear(s.r, c, s.h) + detail::bilinear(s.r, d, s.r);
  Parts<T> p;
  p.log_det_ratio = log(det_schur) + log(det_br) - T(blocks.log_det_precision);
  p.correction = correction;
  p.d2 = s.ff - correction / sigma2;
  p.contribution = 0.5 * p.log_det_ratio + p.d2 / (2.0 * sigma2);
  return p;
}

void check_inputs(const FlowField& flow, Index mask_pixels, const Lattice& lattice,
                  const MotionPrior& prior) {
  check_flow(flow, lattice);
  if (mask_pixels != lattice.size()) {
    throw InvalidArgument("mask stack has " + std::to_string(mask_pixels) +
                          " pixels, lattice has " + std::to_string(lattice.size()));
  }
  prior.validate();
}

std::span<const double> row_span(const RowMatrix& m, int k) {
  return {m.data() + static_cast<Index>(k) * m.cols(), static_cast<size_t>(m.cols())};
}

constexpr int kDualSize = kMomentCount;
using RegionDual = Dual<kDualSize>;

NllGradient affine_value_and_gradient(const FlowField& flow, const SoftMaskStack& masks,
                                      const Lattice& lattice, const MotionPrior& prior,
                                      bool with_grad) {
  const AffineBlocks blocks = affine_blocks(prior);
  const Centering centering = centering_of(prior);
  const double sigma2 = prior.noise_var;
  NllGradient out;
  out.value = static_cast<double>(lattice.size()) * std::log(2.0 * std::numbers::pi * sigma2);
  if (with_grad) out.grad = RowMatrix::Zero(masks.k(), masks.n());

  for (int k = 0; k < masks.k(); ++k) {
    const auto mask = row_span(masks.weights(), k);
    double mass = 0.0;
    const Origin origin = mask_centroid(mask, lattice, mass);
    if (mass < kEmptyRegionMass) continue;
    const Moments<double> raw = accumulate(flow, mask, lattice, origin);
    if (!with_grad) {
      out.value += affine_parts(center(raw, centering), blocks, sigma2, k).contribution;
      continue;
    }
    Moments<RegionDual> dual;
    for (int j = 0; j < kMomentCount; ++j) dual[j] = RegionDual::variable(raw[j], j);
    const RegionDual contribution = affine_parts(center(dual, centering), blocks, sigma2, k).contribution;
    out.value += contribution.v;
    for (Index i = 0; i < lattice.size(); ++i) {
      const auto phi = features(lattice.x(i) - origin.x, lattice.y(i) - origin.y, flow.u[i], flow.v[i]);
      double g = 0.0;
      for (int j = 0; j < kMomentCount; ++j) g += contribution.d[j] * phi[j];
      out.grad(k, i) = g;
    }
  }
  return out;
}

// Translation likelihood in the weighted-mean form, with its gradient.
NllGradient translation_value_and_gradient(const FlowField& flow, const SoftMaskStack& masks,
                                           const Lattice& lattice, const MotionPrior& prior,
                                           bool with_grad) {
  const double tau2 = prior.translation_variance();
  const double sigma2 = prior.noise_var;
  const double ratio = sigma2 / tau2;
  const int kk = masks.k();
  const Index n = masks.n();
  const RowMatrix& m = masks.weights();

  const Vector fu = flow.u.array() - prior.mean[0];
  const Vector fv = flow.v.array() - prior.mean[1];

  std::vector<double> mass(kk, 0.0), su(kk, 0.0), sv(kk, 0.0), wu(kk, 0.0), wv(kk, 0.0),
      weight(kk, 0.0);
  NllGradient out;
  out.value = static_cast<double>(n) * std::log(2.0 * std::numbers::pi * sigma2);
  for (int k = 0; k < kk; ++k) {
    for (Index i = 0; i < n; ++i) {
      mass[k] += m(k, i);
      su[k] += m(k, i) * fu[i];
      sv[k] += m(k, i) * fv[i];
    }
    if (mass[k] < kEmptyRegionMass) continue;
    weight[k] = 1.0 - std::sqrt(ratio / (mass[k] + ratio));
    wu[k] = su[k] / mass[k] * weight[k];
    wv[k] = sv[k] / mass[k] * weight[k];
    out.value += std::log((mass[k] + ratio) / ratio);
  }

  Vector res_u(n), res_v(n);
  double quad = 0.0;
  for (Index i = 0; i < n; ++i) {
    double pu = 0.0, pv = 0.0;
    for (int k = 0; k < kk; ++k) {
      pu += wu[k] * m(k, i);
      pv += wv[k] * m(k, i);
    }
    res_u[i] = fu[i] - pu;
    res_v[i] = fv[i] - pv;
    quad += res_u[i] * res_u[i] + res_v[i] * res_v[i];
  }
  out.value += quad / (2.0 * sigma2);
  if (!with_grad) return out;

  out.grad = RowMatrix::Zero(kk, n);
  for (int k = 0; k < kk; ++k) {
    if (mass[k] < kEmptyRegionMass) continue;
    double eu = 0.0, ev = 0.0;
    for (Index i = 0; i < n; ++i) {
      eu += res_u[i] * m(k, i);
      ev += res_v[i] * m(k, i);
    }
    const double nk = mass[k];
    const double w = weight[k];
    const double dw_dn = 0.5 * std::sqrt(ratio) * std::pow(nk + ratio, -1.5);
    const double du_dsum = w / nk;
    const double du_dn = -su[k] * w / (nk * nk) + su[k] / nk * dw_dn;
    const double dv_dsum = w / nk;
    const double dv_dn = -sv[k] * w / (nk * nk) + sv[k] / nk * dw_dn;
    const double log_term = 1.0 / (nk + ratio);
    for (Index i = 0; i < n; ++i) {
      const double direct = -2.0 * (res_u[i] * wu[k] + res_v[i] * wv[k]);
      const double through_mean =
          -2.0 * (eu * (du_dn + du_dsum * fu[i]) + ev * (dv_dn + dv_dsum * fv[i]));
      out.grad(k, i) = log_term + (direct + through_mean) / (2.0 * sigma2);
    }
  }
  return out;
}

}  // namespace

RegionStats region_stats(const FlowField& flow, std::span<const double> mask, const Lattice& lattice,
                         const MotionPrior& prior) {
  check_inputs(flow, static_cast<Index>(mask.size()), lattice, prior);
  double mass = 0.0;
  const Origin origin = mask_centroid(mask, lattice, mass);
  RegionStats stats;
  if (mass < kEmptyRegionMass) return stats;
  const Centered<double> c = center(accumulate(flow, mask, lattice, origin), centering_of(prior));
  stats.n = c.n;
  stats.centroid_x = origin.x + c.cx;
  stats.centroid_y = origin.y + c.cy;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) stats.gram[i][j] = c.gram(i, j);
    stats.h[i] = c.h[i];
    stats.r[i] = c.r[i];
  }
  stats.ff = c.ff;
  return stats;
}

RegionLikelihoodParts affine_region_parts(const RegionStats& stats, const MotionPrior& prior,
                                          int region) {
  if (prior.kind != MotionModelKind::Affine) throw InvalidArgument("affine prior required");
  prior.validate();
  if (stats.n < kEmptyRegionMass) return {};
  Centered<double> c;
  c.n = stats.n;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) c.gram(i, j) = stats.gram[i][j];
    c.h[i] = stats.h[i];
    c.r[i] = stats.r[i];
  }
  c.ff = stats.ff;
  const Parts<double> p = affine_parts(c, affine_blocks(prior), prior.noise_var, region);
  return {p.log_det_ratio, p.correction, p.d2, p.contribution};
}

double nll_affine(const FlowField& flow, const SoftMaskStack& masks, const Lattice& lattice,
                  const MotionPrior& prior) {
  check_inputs(flow, masks.n(), lattice, prior);
  if (prior.kind != MotionModelKind::Affine) throw InvalidArgument("nll_affine needs an affine prior");
  return affine_value_and_gradient(flow, masks, lattice, prior, false).value;
}

double nll_translation(const FlowField& flow, const SoftMaskStack& masks, const Lattice& lattice,
                       const MotionPrior& prior) {
  check_inputs(flow, masks.n(), lattice, prior);
  if (prior.kind != MotionModelKind::Translation) {
    throw InvalidArgument("nll_translation needs a translation prior");
  }
  return translation_value_and_gradient(flow, masks, lattice, prior, false).value;
}

double nll_translation_unweighted(const FlowField& flow, const SoftMaskStack& masks,
                                  const Lattice& lattice, const MotionPrior& prior) {
  check_inputs(flow, masks.n(), lattice, prior);
  const double tau2 = prior.translation_variance();
  const double sigma2 = prior.noise_var;
  const double ratio = sigma2 / tau2;
  const Index n = masks.n();
  const RowMatrix& m = masks.weights();
  double value = static_cast<double>(n) * std::log(2.0 * std::numbers::pi * sigma2);
  std::vector<double> shrink(static_cast<size_t>(masks.k()), 0.0);
  for (int k = 0; k < masks.k(); ++k) {
    double nk = 0.0, su = 0.0, sv = 0.0;
    for (Index i = 0; i < n; ++i) {
      nk += m(k, i);
      su += m(k, i) * (flow.u[i] - prior.mean[0]);
      sv += m(k, i) * (flow.v[i] - prior.mean[1]);
    }
    if (nk < kEmptyRegionMass) continue;
    value += std::log((nk + ratio) / ratio);
    const double ubar = su / nk, vbar = sv / nk;
    shrink[static_cast<size_t>(k)] = nk * (ubar * ubar + vbar * vbar) / (nk + ratio);
  }
  double quad = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double fu = flow.u[i] - prior.mean[0];
    const double fv = flow.v[i] - prior.mean[1];
    double term = fu * fu + fv * fv;
    for (int k = 0; k < masks.k(); ++k) term -= shrink[static_cast<size_t>(k)] * m(k, i);
    quad += term;
  }
  return value + quad / (2.0 * sigma2);
}

double nll(const FlowField& flow, const SoftMaskStack& masks, const Lattice& lattice,
           const MotionPrior& prior) {
  return prior.kind == MotionModelKind::Affine ? nll_affine(flow, masks, lattice, prior)
                                               : nll_translation(flow, masks, lattice, prior);
}

NllGradient nll_with_gradient(const FlowField& flow, const SoftMaskStack& masks,
                              const Lattice& lattice, const MotionPrior& prior) {
  check_inputs(flow, masks.n(), lattice, prior);
  return prior.kind == MotionModelKind::Affine
             ? affine_value_and_gradient(flow, masks, lattice, prior, true)
             : translation_value_and_gradient(flow, masks, lattice, prior, true);
}

double nll_oracle(const FlowField& flow, const HardMaskStack& masks, const Lattice& lattice,
                  const MotionPrior& prior, Index max_region_pixels) {
  check_inputs(flow, masks.n(), lattice, prior);
  const int d = parameter_count(prior.kind);
  const Centering centering = centering_of(prior);
  const double sigma2 = prior.noise_var;

  std::vector<std::vector<Index>> regions(static_cast<size_t>(masks.k()));
  for (Index i = 0; i < masks.n(); ++i) regions[static_cast<size_t>(masks[i])].push_back(i);

  double total = 0.0;
  for (size_t k = 0; k < regions.size(); ++k) {
    const auto& pixels = regions[k];
    const auto nk = static_cast<Index>(pixels.size());
    if (nk == 0) continue;
    if (nk > max_region_pixels) {
      throw OracleCapacity("region " + std::to_string(k) + " has " + std::to_string(nk) +
                           " pixels; the dense oracle is limited to " +
                           std::to_string(max_region_pixels));
    }
    double xc = 0.0, yc = 0.0;
    for (Index i : pixels) {
      xc += lattice.x(i);
      yc += lattice.y(i);
    }
    xc /= static_cast<double>(nk);
    yc /= static_cast<double>(nk);

    // Selector rows of the full design matrix: x block first, then y block.
    Eigen::MatrixXd design = Eigen::MatrixXd::Zero(2 * nk, d);
    Vector centered_flow(2 * nk);
    for (Index r = 0; r < nk; ++r) {
      const Index i = pixels[static_cast<size_t>(r)];
      const double x = lattice.x(i) - xc;
      const double y = lattice.y(i) - yc;
      if (prior.kind == MotionModelKind::Affine) {
        design(r, 0) = x;
        design(r, 1) = y;
        design(r, 2) = 1.0;
        design(nk + r, 3) = x;
        design(nk + r, 4) = y;
        design(nk + r, 5) = 1.0;
      } else {
        design(r, 0) = 1.0;
        design(nk + r, 1) = 1.0;
      }
      centered_flow[r] = flow.u[i] - (centering.a * x + centering.b * y + centering.c);
      centered_flow[nk + r] = flow.v[i] - (centering.d * x + centering.e * y + centering.f);
    }
    Eigen::MatrixXd covariance = design * prior.cov * design.transpose();
    covariance.diagonal().array() += sigma2;
    Eigen::LLT<Eigen::MatrixXd> llt(covariance);
    if (llt.info() != Eigen::Success) {
      throw IllConditioned("oracle covariance is not positive definite", static_cast<int>(k));
    }
    double log_det = 0.0;
    for (Index i = 0; i < 2 * nk; ++i) log_det += 2.0 * std::log(llt.matrixL()(i, i));
    const Vector whitened = llt.matrixL().solve(centered_flow);
    total += 0.5 * (static_cast<double>(2 * nk) * kLog2Pi + log_det + whitened.squaredNorm());
  }
  return total;
}

HardPartitionScorer::HardPartitionScorer(const FlowField& flow, const Lattice& lattice,
                                         const MotionPrior& prior)
    : flow_(flow), lattice_(lattice), prior_(prior) {
  check_flow(flow, lattice);
  prior.validate();
  constant_ = static_cast<double>(lattice.size()) * std::log(2.0 * std::numbers::pi * prior.noise_var);
  const Centering c = centering_of(prior);
  centering_ = {c.a, c.b, c.c, c.d, c.e, c.f};
  if (prior.kind == MotionModelKind::Affine) {
    const AffineBlocks b = affine_blocks(prior);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        blocks_[static_cast<size_t>(i * 3 + j)] = b.alpha(i, j);
        blocks_[static_cast<size_t>(9 + i * 3 + j)] = b.beta(i, j);
        blocks_[static_cast<size_t>(18 + i * 3 + j)] = b.gamma(i, j);
        blocks_[static_cast<size_t>(27 + i * 3 + j)] = b.delta(i, j);
      }
    log_det_precision_ = b.log_det_precision;
  }
}

RegionMoments HardPartitionScorer::pixel(Index i) const {
  RegionMoments r;
  r.m = features(lattice_.x(i), lattice_.y(i), flow_.u[i], flow_.v[i]);
  return r;
}

RegionMoments HardPartitionScorer::region(std::span<const int> labels, int label) const {
  RegionMoments r;
  for (Index i = 0; i < lattice_.size(); ++i)
    if (labels[static_cast<size_t>(i)] == label) r += pixel(i);
  return r;
}

double HardPartitionScorer::region_term(const RegionMoments& moments) const {
  if (moments.count() < 0.5) return 0.0;
  const Centering c{centering_[0], centering_[1], centering_[2], centering_[3], centering_[4], centering_[5]};
  const Centered<double> s = center(moments.m, c);
  const double sigma2 = prior_.noise_var;
  if (prior_.kind == MotionModelKind::Translation) {
    const double ratio = sigma2 / prior_.translation_variance();
    const double quad = s.ff - (s.h[2] * s.h[2] + s.r[2] * s.r[2]) / (s.n + ratio);
    return std::log((s.n + ratio) / ratio) + quad / (2.0 * sigma2);
  }
  AffineBlocks b;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      b.alpha(i, j) = blocks_[static_cast<size_t>(i * 3 + j)];
      b.beta(i, j) = blocks_[static_cast<size_t>(9 + i * 3 + j)];
      b.gamma(i, j) = blocks_[static_cast<size_t>(18 + i * 3 + j)];
      b.delta(i, j) = blocks_[static_cast<size_t>(27 + i * 3 + j)];
    }
  b.log_det_precision = log_det_precision_;
  return affine_parts(s, b, sigma2, 0).contribution;
}

double HardPartitionScorer::total(std::span<const int> labels, int k) const {
  if (static_cast<Index>(labels.size()) != lattice_.size()) throw InvalidArgument("labels do not match lattice");
  std::vector<RegionMoments> regions(static_cast<size_t>(k));
  for (Index i = 0; i < lattice_.size(); ++i) {
    const int l = labels[static_cast<size_t>(i)];
    if (l < 0 || l >= k) throw InvalidArgument("label out of range");
    regions[static_cast<size_t>(l)] += pixel(i);
  }
  double value = constant_;
  for (const RegionMoments& r : regions) value += region_term(r);
  return value;
}

double nll_simple_mean(const FlowField& flow, const SoftMaskStack& masks, double noise_var) {
  if (flow.u.size() != masks.n() || flow.v.size() != masks.n()) {
    throw InvalidArgument("flow and masks disagree on pixel count");
  }
  if (!(noise_var > 0.0)) throw InvalidArgument("noise variance must be positive");
  const Index n = masks.n();
  const RowMatrix& m = masks.weights();
  std::vector<double> ubar(static_cast<size_t>(masks.k()), 0.0), vbar(ubar);
  for (int k = 0; k < masks.k(); ++k) {
    double nk = 0.0, su = 0.0, sv = 0.0;
    for (Index i = 0; i < n; ++i) {
      nk += m(k, i);
      su += m(k, i) * flow.u[i];
      sv += m(k, i) * flow.v[i];
    }
    if (nk < kEmptyRegionMass) continue;
    ubar[static_cast<size_t>(k)] = su / nk;
    vbar[static_cast<size_t>(k)] = sv / nk;
  }
  double quad = 0.0;
  for (Index i = 0; i < n; ++i) {
    double pu = 0.0, pv = 0.0;
    for (int k = 0; k < masks.k(); ++k) {
      pu += ubar[static_cast<size_t>(k)] * m(k, i);
      pv += vbar[static_cast<size_t>(k)] * m(k, i);
    }
    quad += (flow.u[i] - pu) * (flow.u[i] - pu) + (flow.v[i] - pv) * (flow.v[i] - pv);
  }
  return static_cast<double>(n) * std::log(2.0 * std::numbers::pi * noise_var) + quad / (2.0 * noise_var);
}

}  // namespace motionseg
