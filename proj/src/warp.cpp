#include "motionseg/warp.hpp"

#include "motionseg/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace motionseg {

Frame::Frame(RowMatrix values) : channels(std::move(values)) {
  if (channels.rows() != 3) throw InvalidArgument("frames carry exactly 3 channels");
  if (!channels.allFinite()) throw InvalidArgument("frame values must be finite");
  channels = channels.cwiseMax(0.0).cwiseMin(1.0);
}

Frame Frame::from_rgb8(std::span<const std::uint8_t> rgb, const Lattice& lattice) {
  const Index n = lattice.size();
  if (static_cast<Index>(rgb.size()) != 3 * n) throw InvalidArgument("RGB buffer does not match lattice");
  RowMatrix c(3, n);
  for (Index i = 0; i < n; ++i)
    for (int ch = 0; ch < 3; ++ch) c(ch, i) = rgb[static_cast<size_t>(3 * i + ch)] / 255.0;
  return Frame(std::move(c));
}

namespace {

struct Stencil {
  std::array<Index, 4> idx;
  std::array<double, 4> w;
};

Stencil stencil(const Lattice& lattice, double qx, double qy) {
  const int width = lattice.width(), height = lattice.height();
  const double x = std::clamp(qx, 0.0, static_cast<double>(width - 1));
  const double y = std::clamp(qy, 0.0, static_cast<double>(height - 1));
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, width - 1);
  const int y1 = std::min(y0 + 1, height - 1);
  const double fx = x - x0, fy = y - y0;
  return {{lattice.index(x0, y0), lattice.index(x1, y0), lattice.index(x0, y1), lattice.index(x1, y1)},
          {(1.0 - fx) * (1.0 - fy), fx * (1.0 - fy), (1.0 - fx) * fy, fx * fy}};
}

template <typename Field>
double apply(const Stencil& s, const Field& f) {
  return s.w[0] * f(s.idx[0]) + s.w[1] * f(s.idx[1]) + s.w[2] * f(s.idx[2]) + s.w[3] * f(s.idx[3]);
}

std::vector<Stencil> stencils(const FlowField& flow, const Lattice& lattice) {
  check_flow(flow, lattice);
  std::vector<Stencil> out(static_cast<size_t>(lattice.size()));
  for (Index i = 0; i < lattice.size(); ++i) {
    out[static_cast<size_t>(i)] = stencil(lattice, lattice.x(i) + flow.u[i], lattice.y(i) + flow.v[i]);
  }
  return out;
}

RowMatrix sample_rows(const RowMatrix& rows, const std::vector<Stencil>& st) {
  RowMatrix out(rows.rows(), rows.cols());
  for (Index r = 0; r < rows.rows(); ++r) {
    auto f = [&](Index j) { return rows(r, j); };
    for (size_t i = 0; i < st.size(); ++i) out(r, static_cast<Index>(i)) = apply(st[i], f);
  }
  return out;
}

}  // namespace

double bilinear_sample(std::span<const double> field, const Lattice& lattice, double qx, double qy) {
  if (static_cast<Index>(field.size()) != lattice.size()) throw InvalidArgument("field does not match lattice");
  const Stencil s = stencil(lattice, qx, qy);
  return apply(s, [&](Index j) { return field[static_cast<size_t>(j)]; });
}

Vector bilinear_sample(std::span<const double> field, const Lattice& lattice,
                       std::span<const double> qx, std::span<const double> qy) {
  if (qx.size() != qy.size()) throw InvalidArgument("query coordinate lengths differ");
  Vector out(static_cast<Index>(qx.size()));
  for (size_t i = 0; i < qx.size(); ++i) out[static_cast<Index>(i)] = bilinear_sample(field, lattice, qx[i], qy[i]);
  return out;
}

Frame warp_by_flow(const Frame& frame, const FlowField& flow, const Lattice& lattice) {
  if (frame.n() != lattice.size()) throw InvalidArgument("frame does not match lattice");
  return Frame(sample_rows(frame.channels, stencils(flow, lattice)));
}

SoftMaskStack warp_by_flow(const SoftMaskStack& masks, const FlowField& flow, const Lattice& lattice) {
  if (masks.n() != lattice.size()) throw InvalidArgument("masks do not match lattice");
  RowMatrix w = sample_rows(masks.weights(), stencils(flow, lattice));
  for (Index i = 0; i < w.cols(); ++i) {
    const double s = w.col(i).sum();
    if (std::abs(s - 1.0) > 1e-12) w.col(i) /= s;
  }
  return SoftMaskStack(std::move(w));
}

Vector photometric_weight(const Frame& a, const Frame& b) {
  if (a.n() != b.n()) throw InvalidArgument("frames differ in size");
  Vector e(a.n());
  for (Index i = 0; i < a.n(); ++i) {
    e[i] = (std::abs(a.channels(0, i) - b.channels(0, i)) + std::abs(a.channels(1, i) - b.channels(1, i)) +
            std::abs(a.channels(2, i) - b.channels(2, i))) / 3.0;
  }
  const double m = e.size() > 0 ? e.maxCoeff() : 0.0;
  if (m <= 0.0) return Vector::Ones(a.n());
  return Vector::Ones(a.n()) - e / m;
}

namespace {

void floor_normalize(const RowMatrix& m, Index i, double floor, std::vector<double>& out, double& z) {
  z = 0.0;
  for (Index r = 0; r < m.rows(); ++r) {
    out[static_cast<size_t>(r)] = std::max(m(r, i), floor);
    z += out[static_cast<size_t>(r)];
  }
  for (auto& v : out) v /= z;
}

// Per-pixel symmetric KL; optionally its gradients with respect to the raw
// (unfloored) p and q columns, scaled by scale[i].
Vector sym_kl_impl(const RowMatrix& p, const RowMatrix& q, double floor, const Vector* scale,
                   RowMatrix* gp, RowMatrix* gq) {
  if (p.rows() != q.rows() || p.cols() != q.cols()) throw InvalidArgument("mask stacks differ in shape");
  const auto k = static_cast<size_t>(p.rows());
  std::vector<double> pt(k), qt(k), g(k);
  Vector d(p.cols());
  for (Index i = 0; i < p.cols(); ++i) {
    double zp = 0.0, zq = 0.0;
    floor_normalize(p, i, floor, pt, zp);
    floor_normalize(q, i, floor, qt, zq);
    double s = 0.0;
    for (size_t r = 0; r < k; ++r) s += (pt[r] - qt[r]) * (std::log(pt[r]) - std::log(qt[r]));
    d[i] = 0.5 * s;
    if (gp == nullptr) continue;
    const double c = (*scale)[i];
    // d/dp~
    double mean = 0.0;
    for (size_t r = 0; r < k; ++r) {
      g[r] = 0.5 * (std::log(pt[r]) - std::log(qt[r]) + (pt[r] - qt[r]) / pt[r]);
      mean += pt[r] * g[r];
    }
    for (size_t r = 0; r < k; ++r) {
      if (p(static_cast<Index>(r), i) > floor) (*gp)(static_cast<Index>(r), i) += c * (g[r] - mean) / zp;
    }
    mean = 0.0;
    for (size_t r = 0; r < k; ++r) {
      g[r] = 0.5 * (std::log(qt[r]) - std::log(pt[r]) + (qt[r] - pt[r]) / qt[r]);
      mean += qt[r] * g[r];
    }
    for (size_t r = 0; r < k; ++r) {
      if (q(static_cast<Index>(r), i) > floor) (*gq)(static_cast<Index>(r), i) += c * (g[r] - mean) / zq;
    }
  }
  return d;
}

// w(a, warp(b)) . d(P, warp(Q)) averaged over pixels.
double directed_term(const Frame& a, const Frame& b, const FlowField& flow, const RowMatrix& p,
                     const RowMatrix& q, const Lattice& lattice, double floor, RowMatrix* gp,
                     RowMatrix* gq) {
  const std::vector<Stencil> st = stencils(flow, lattice);
  const Frame warped_b(sample_rows(b.channels, st));
  const Vector w = photometric_weight(a, warped_b);
  const RowMatrix warped_q = sample_rows(q, st);
  const double inv_n = 1.0 / static_cast<double>(lattice.size());

  if (gp == nullptr) {
    const Vector d = sym_kl_impl(p, warped_q, floor, nullptr, nullptr, nullptr);
    return w.dot(d) * inv_n;
  }
  const Vector scale = w * inv_n;
  RowMatrix g_warped = RowMatrix::Zero(q.rows(), q.cols());
  const Vector d = sym_kl_impl(p, warped_q, floor, &scale, gp, &g_warped);
  for (Index r = 0; r < q.rows(); ++r) {
    for (size_t i = 0; i < st.size(); ++i) {
      const double gi = g_warped(r, static_cast<Index>(i));
      if (gi == 0.0) continue;
      for (int c = 0; c < 4; ++c) (*gq)(r, st[i].idx[static_cast<size_t>(c)]) += st[i].w[static_cast<size_t>(c)] * gi;
    }
  }
  return w.dot(d) * inv_n;
}

void check_inputs(const Frame& frame1, const Frame& frame2, const SoftMaskStack& masks1,
                  const SoftMaskStack& masks2, const Lattice& lattice) {
  if (frame1.n() != lattice.size() || frame2.n() != lattice.size()) {
    throw InvalidArgument("frames do not match lattice");
  }
  if (masks1.n() != lattice.size() || masks2.n() != lattice.size() || masks1.k() != masks2.k()) {
    throw InvalidArgument("mask stacks do not match");
  }
}

}  // namespace

Vector symmetric_kl(const RowMatrix& p, const RowMatrix& q, double prob_floor) {
  return sym_kl_impl(p, q, prob_floor, nullptr, nullptr, nullptr);
}

double warp_loss(const Frame& frame1, const Frame& frame2, const WarpPair& pair,
                 const SoftMaskStack& masks1, const SoftMaskStack& masks2, const Lattice& lattice,
                 double prob_floor) {
  check_inputs(frame1, frame2, masks1, masks2, lattice);
  const double t1 = directed_term(frame1, frame2, pair.forward, masks1.weights(), masks2.weights(),
                                  lattice, prob_floor, nullptr, nullptr);
  const double t2 = directed_term(frame2, frame1, pair.backward, masks2.weights(), masks1.weights(),
                                  lattice, prob_floor, nullptr, nullptr);
  return t1 + t2;
}

WarpLossResult warp_loss_with_gradient(const Frame& frame1, const Frame& frame2,
                                       const WarpPair& pair, const SoftMaskStack& masks1,
                                       const SoftMaskStack& masks2, const Lattice& lattice,
                                       double prob_floor) {
  check_inputs(frame1, frame2, masks1, masks2, lattice);
  WarpLossResult out;
  out.grad1 = RowMatrix::Zero(masks1.k(), masks1.n());
  out.grad2 = RowMatrix::Zero(masks2.k(), masks2.n());
  const double t1 = directed_term(frame1, frame2, pair.forward, masks1.weights(), masks2.weights(),
                                  lattice, prob_floor, &out.grad1, &out.grad2);
  const double t2 = directed_term(frame2, frame1, pair.backward, masks2.weights(), masks1.weights(),
                                  lattice, prob_floor, &out.grad2, &out.grad1);
  out.value = t1 + t2;
  return out;
}

}  // namespace motionseg
