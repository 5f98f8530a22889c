#pragma once

// Brute-force reference implementations used only by the tests.

#include "motionseg/core.hpp"
#include "motionseg/motion_model.hpp"
#include "motionseg/random.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <vector>

namespace oracle {

using namespace motionseg;

// Dense marginal likelihood: per region, f_k ~ N(P mu, P Sigma P^T + s2 I)
// with P built pixel by pixel from centroid-relative coordinates.
inline double dense_nll(const FlowField& flow, const std::vector<int>& labels, int k,
                        const Lattice& lattice, const MotionPrior& prior) {
  const bool affine = prior.kind == MotionModelKind::Affine;
  const int d = affine ? 6 : 2;
  double total = 0.0;
  for (int r = 0; r < k; ++r) {
    std::vector<Index> px;
    for (Index i = 0; i < lattice.size(); ++i)
      if (labels[static_cast<size_t>(i)] == r) px.push_back(i);
    if (px.empty()) continue;
    const auto m = static_cast<Index>(px.size());
    double cx = 0, cy = 0;
    for (Index i : px) {
      cx += lattice.x(i);
      cy += lattice.y(i);
    }
    cx /= m;
    cy /= m;
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(2 * m, d);
    Eigen::VectorXd f(2 * m), base(2 * m);
    for (Index j = 0; j < m; ++j) {
      const Index i = px[static_cast<size_t>(j)];
      const double x = lattice.x(i) - cx, y = lattice.y(i) - cy;
      if (affine) {
        P.row(j) << x, y, 1, 0, 0, 0;
        P.row(m + j) << 0, 0, 0, x, y, 1;
      } else {
        P.row(j) << 1, 0;
        P.row(m + j) << 0, 1;
      }
      // Flow relative to the identity map: f = P theta - (x, y) + eps
      f[j] = flow.u[i] + (affine ? x : 0.0);
      f[m + j] = flow.v[i] + (affine ? y : 0.0);
    }
    const Eigen::VectorXd resid = f - P * prior.mean;
    const Eigen::MatrixXd C = P * prior.cov * P.transpose() + prior.noise_var * Eigen::MatrixXd::Identity(2 * m, 2 * m);
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(C);
    const double logdet = ldlt.vectorD().array().log().sum();
    total += 0.5 * (2.0 * m * std::log(2.0 * M_PI) + logdet + resid.dot(ldlt.solve(resid)));
  }
  return total;
}

// ARI by enumerating every pixel pair.
inline double pair_counting_ari(const std::vector<int>& a, const std::vector<int>& b) {
  const size_t n = a.size();
  double both = 0, only_a = 0, only_b = 0, pairs = 0;
  for (size_t i = 0; i < n; ++i)
    for (size_t j = i + 1; j < n; ++j) {
      const bool sa = a[i] == a[j], sb = b[i] == b[j];
      both += sa && sb;
      only_a += sa;
      only_b += sb;
      pairs += 1;
    }
  const double expected = only_a * only_b / pairs;
  const double maximum = 0.5 * (only_a + only_b);
  if (maximum == expected) return 1.0;
  return (both - expected) / (maximum - expected);
}

// Minimum cost over all injections of the shorter side into the longer side,
// with the lexicographically smallest optimal column sequence.
struct BruteAssignment {
  double cost = INFINITY;
  std::vector<std::pair<int, int>> matching;
};

inline BruteAssignment brute_assignment(const Eigen::MatrixXd& c) {
  const bool t = c.rows() > c.cols();
  const Eigen::MatrixXd a = t ? Eigen::MatrixXd(c.transpose()) : c;
  const int rows = static_cast<int>(a.rows()), cols = static_cast<int>(a.cols());
  BruteAssignment best;
  std::vector<int> chosen;
  std::vector<bool> used(static_cast<size_t>(cols), false);
  std::vector<int> best_cols;
  std::function<void(int, double)> rec = [&](int r, double acc) {
    if (r == rows) {
      if (acc < best.cost - 1e-9) {
        best.cost = acc;
        best_cols = chosen;
      }
      return;
    }
    for (int j = 0; j < cols; ++j) {
      if (used[static_cast<size_t>(j)]) continue;
      used[static_cast<size_t>(j)] = true;
      chosen.push_back(j);
      rec(r + 1, acc + a(r, j));
      chosen.pop_back();
      used[static_cast<size_t>(j)] = false;
    }
  };
  rec(0, 0.0);
  for (int r = 0; r < rows; ++r) {
    if (t) {
      best.matching.emplace_back(best_cols[static_cast<size_t>(r)], r);
    } else {
      best.matching.emplace_back(r, best_cols[static_cast<size_t>(r)]);
    }
  }
  std::sort(best.matching.begin(), best.matching.end());
  return best;
}

// mIoU by enumerating all injective matchings between segment sets.
inline double enumerate_miou(const std::vector<int>& pred, const std::vector<int>& gt) {
  std::vector<int> ps = pred, gs = gt;
  std::sort(ps.begin(), ps.end());
  ps.erase(std::unique(ps.begin(), ps.end()), ps.end());
  std::sort(gs.begin(), gs.end());
  gs.erase(std::unique(gs.begin(), gs.end()), gs.end());
  auto iou = [&](int p, int g) {
    double inter = 0, uni = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
      inter += pred[i] == p && gt[i] == g;
      uni += pred[i] == p || gt[i] == g;
    }
    return inter / uni;
  };
  const bool swap = ps.size() > gs.size();
  const std::vector<int>& small = swap ? gs : ps;
  const std::vector<int>& large = swap ? ps : gs;
  std::vector<int> perm(large.size());
  std::iota(perm.begin(), perm.end(), 0);
  double best = 0.0;
  do {
    double s = 0.0;
    for (size_t i = 0; i < small.size(); ++i) {
      s += swap ? iou(large[static_cast<size_t>(perm[i])], small[i]) : iou(small[i], large[static_cast<size_t>(perm[i])]);
    }
    best = std::max(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best / static_cast<double>(large.size());
}

inline FlowField random_flow(CounterRng& rng, Index n, double scale) {
  FlowField f = FlowField::zeros(n);
  for (Index i = 0; i < n; ++i) {
    f.u[i] = scale * rng.normal();
    f.v[i] = scale * rng.normal();
  }
  return f;
}

// Random SPD matrix A A^T + eps I.
inline Eigen::MatrixXd random_spd(CounterRng& rng, int d, double scale) {
  Eigen::MatrixXd a(d, d);
  for (Index i = 0; i < a.size(); ++i) a.data()[i] = rng.normal();
  Eigen::MatrixXd s = scale * (a * a.transpose() / d + 0.1 * Eigen::MatrixXd::Identity(d, d));
  return 0.5 * (s + s.transpose());
}

// Labels with every region non-empty when possible.
inline std::vector<int> random_labels(CounterRng& rng, Index n, int k) {
  std::vector<int> l(static_cast<size_t>(n));
  for (auto& v : l) v = rng.uniform_int(0, k - 1);
  for (int r = 0; r < k && r < n; ++r) l[static_cast<size_t>(r)] = r;
  return l;
}

}  // namespace oracle
