#include "motionseg/metrics.hpp"

#include "motionseg/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

namespace motionseg {

ComponentLabels connected_components(std::span<const int> labels, int height, int width,
                                     Connectivity connectivity) {
  const auto n = static_cast<size_t>(height) * static_cast<size_t>(width);
  if (labels.size() != n) throw InvalidArgument("label raster does not match dimensions");
  ComponentLabels out;
  out.ids.assign(n, -1);
  std::vector<size_t> stack;
  static constexpr int kDx[8] = {1, -1, 0, 0, 1, 1, -1, -1};
  static constexpr int kDy[8] = {0, 0, 1, -1, 1, -1, 1, -1};
  const int neighbours = connectivity == Connectivity::Four ? 4 : 8;
  for (size_t seed = 0; seed < n; ++seed) {
    if (labels[seed] < 0 || out.ids[seed] >= 0) continue;
    const int id = out.count++;
    out.ids[seed] = id;
    stack.push_back(seed);
    while (!stack.empty()) {
      const size_t p = stack.back();
      stack.pop_back();
      const int px = static_cast<int>(p % static_cast<size_t>(width));
      const int py = static_cast<int>(p / static_cast<size_t>(width));
      for (int d = 0; d < neighbours; ++d) {
        const int qx = px + kDx[d], qy = py + kDy[d];
        if (qx < 0 || qy < 0 || qx >= width || qy >= height) continue;
        const size_t q = static_cast<size_t>(qy) * static_cast<size_t>(width) + static_cast<size_t>(qx);
        if (out.ids[q] >= 0 || labels[q] != labels[seed]) continue;
        out.ids[q] = id;
        stack.push_back(q);
      }
    }
  }
  return out;
}

namespace {

// Maps arbitrary label values onto 0..count-1 in increasing label order.
std::vector<int> compact(std::span<const int> labels, int& count) {
  std::map<int, int> index;
  for (int l : labels) index.emplace(l, 0);
  int next = 0;
  for (auto& [label, id] : index) id = next++;
  count = next;
  std::vector<int> out(labels.size());
  for (size_t i = 0; i < labels.size(); ++i) out[i] = index[labels[i]];
  return out;
}

double pairs(double n) { return n * (n - 1.0) / 2.0; }

}  // namespace

ContingencyTable contingency(std::span<const int> pred, std::span<const int> gt) {
  if (pred.size() != gt.size()) throw InvalidArgument("label rasters differ in length");
  int rows = 0, cols = 0;
  const std::vector<int> p = compact(pred, rows);
  const std::vector<int> g = compact(gt, cols);
  ContingencyTable table;
  table.counts = Eigen::MatrixXd::Zero(rows, cols);
  for (size_t i = 0; i < p.size(); ++i) table.counts(p[i], g[i]) += 1.0;
  table.row_sums = table.counts.rowwise().sum();
  table.col_sums = table.counts.colwise().sum().transpose();
  table.total = static_cast<double>(pred.size());
  return table;
}

double adjusted_rand_index(const ContingencyTable& table) {
  const double total_pairs = pairs(table.total);
  if (total_pairs <= 0.0) return 1.0;
  double index = 0.0;
  for (Index i = 0; i < table.counts.size(); ++i) index += pairs(table.counts.data()[i]);
  double a = 0.0, b = 0.0;
  for (Index i = 0; i < table.row_sums.size(); ++i) a += pairs(table.row_sums[i]);
  for (Index j = 0; j < table.col_sums.size(); ++j) b += pairs(table.col_sums[j]);
  const double expected = a * b / total_pairs;
  const double maximum = 0.5 * (a + b);
  const double denom = maximum - expected;
  if (denom == 0.0) return 1.0;
  return (index - expected) / denom;
}

double fg_ari(std::span<const int> pred, std::span<const int> gt, int gt_background_label) {
  if (pred.size() != gt.size()) throw InvalidArgument("label rasters differ in length");
  std::vector<int> p, g;
  for (size_t i = 0; i < gt.size(); ++i) {
    if (gt[i] == gt_background_label) continue;
    p.push_back(pred[i]);
    g.push_back(gt[i]);
  }
  if (g.empty()) throw InvalidArgument("FG-ARI is undefined without foreground pixels");
  return adjusted_rand_index(contingency(p, g));
}

namespace {

// Shortest augmenting path assignment with potentials; rows <= cols.
// Returns the column assigned to each row and the optimal cost.
double solve_assignment(const Eigen::MatrixXd& a, std::vector<int>& row_to_col) {
  const int n = static_cast<int>(a.rows());
  const int m = static_cast<int>(a.cols());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = a(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  row_to_col.assign(static_cast<size_t>(n), -1);
  double cost = 0.0;
  for (int j = 1; j <= m; ++j) {
    if (p[j] != 0) {
      row_to_col[static_cast<size_t>(p[j] - 1)] = j - 1;
      cost += a(p[j] - 1, j - 1);
    }
  }
  return cost;
}

double sub_optimum(const Eigen::MatrixXd& a, int first_row, const std::vector<char>& col_used) {
  const int rows = static_cast<int>(a.rows()) - first_row;
  if (rows == 0) return 0.0;
  std::vector<int> cols;
  for (int j = 0; j < a.cols(); ++j)
    if (!col_used[static_cast<size_t>(j)]) cols.push_back(j);
  Eigen::MatrixXd sub(rows, static_cast<Index>(cols.size()));
  for (int r = 0; r < rows; ++r)
    for (size_t c = 0; c < cols.size(); ++c) sub(r, static_cast<Index>(c)) = a(first_row + r, cols[c]);
  std::vector<int> unused;
  return solve_assignment(sub, unused);
}

}  // namespace

Assignment hungarian(const Eigen::MatrixXd& cost) {
  if (!cost.allFinite()) throw InvalidArgument("assignment costs must be finite");
  Assignment result;
  if (cost.rows() == 0 || cost.cols() == 0) return result;
  const bool transposed = cost.rows() > cost.cols();
  const Eigen::MatrixXd a = transposed ? Eigen::MatrixXd(cost.transpose()) : cost;
  const int n = static_cast<int>(a.rows());
  const int m = static_cast<int>(a.cols());

  std::vector<int> row_to_col;
  const double optimum = solve_assignment(a, row_to_col);
  const double tol = 1e-9 * std::max(1.0, a.cwiseAbs().maxCoeff() * n);

  // Fix rows in order, each to the smallest column that still admits an
  // optimal completion.
  std::vector<char> col_used(static_cast<size_t>(m), 0);
  std::vector<int> chosen(static_cast<size_t>(n), -1);
  double fixed = 0.0;
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < m; ++c) {
      if (col_used[static_cast<size_t>(c)]) continue;
      col_used[static_cast<size_t>(c)] = 1;
      const double completion = fixed + a(r, c) + sub_optimum(a, r + 1, col_used);
      if (completion <= optimum + tol) {
        chosen[static_cast<size_t>(r)] = c;
        fixed += a(r, c);
        break;
      }
      col_used[static_cast<size_t>(c)] = 0;
    }
    if (chosen[static_cast<size_t>(r)] < 0) {
      // Tolerance corner case; fall back to the solver's own matching.
      chosen = row_to_col;
      break;
    }
  }
  for (int r = 0; r < n; ++r) {
    const int c = chosen[static_cast<size_t>(r)];
    if (transposed) {
      result.matching.emplace_back(c, r);
    } else {
      result.matching.emplace_back(r, c);
    }
    result.total_cost += cost(result.matching.back().first, result.matching.back().second);
  }
  std::sort(result.matching.begin(), result.matching.end());
  return result;
}

double miou_hungarian(std::span<const int> pred, std::span<const int> gt, const MiouOptions& options) {
  if (pred.size() != gt.size()) throw InvalidArgument("label rasters differ in length");
  std::vector<int> p, g;
  for (size_t i = 0; i < gt.size(); ++i) {
    if (options.foreground_only && gt[i] == options.gt_background_label) continue;
    p.push_back(pred[i]);
    g.push_back(gt[i]);
  }
  if (g.empty()) throw InvalidArgument("mIoU is undefined without evaluated pixels");
  const ContingencyTable table = contingency(p, g);
  const Index rows = table.counts.rows(), cols = table.counts.cols();
  Eigen::MatrixXd iou(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) {
      const double inter = table.counts(i, j);
      iou(i, j) = inter / (table.row_sums[i] + table.col_sums[j] - inter);
    }
  }
  const Assignment match = hungarian(Eigen::MatrixXd::Ones(rows, cols) - iou);
  double sum = 0.0;
  for (const auto& [r, c] : match.matching) sum += iou(r, c);
  return sum / static_cast<double>(std::max(rows, cols));
}

HardMaskStack postprocess_connected_components(const HardMaskStack& masks, const Lattice& lattice,
                                               int k_keep, double min_area_frac,
                                               Connectivity connectivity) {
  if (masks.n() != lattice.size()) throw InvalidArgument("masks do not match lattice");
  if (k_keep < 1) throw InvalidArgument("k_keep must be at least 1");
  if (!(min_area_frac > 0.0 && min_area_frac < 1.0)) {
    throw InvalidArgument("min_area_frac must lie in (0, 1)");
  }
  const ComponentLabels comps =
      connected_components(masks.labels(), lattice.height(), lattice.width(), connectivity);
  std::vector<Index> size(static_cast<size_t>(comps.count), 0);
  for (int id : comps.ids) ++size[static_cast<size_t>(id)];
  std::vector<int> order(static_cast<size_t>(comps.count));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return size[static_cast<size_t>(a)] > size[static_cast<size_t>(b)]; });

  const double min_pixels = min_area_frac * static_cast<double>(lattice.size());
  std::vector<int> relabel(static_cast<size_t>(comps.count), 0);  // default: merge into the largest
  int kept = 0;
  for (size_t rank = 0; rank < order.size(); ++rank) {
    const int id = order[rank];
    const bool large_enough = static_cast<double>(size[static_cast<size_t>(id)]) >= min_pixels;
    if (rank == 0 || (kept < k_keep && large_enough)) {
      relabel[static_cast<size_t>(id)] = kept++;
    }
    if (kept == k_keep) break;
  }
  std::vector<int> labels(comps.ids.size());
  for (size_t i = 0; i < labels.size(); ++i) labels[i] = relabel[static_cast<size_t>(comps.ids[i])];
  return HardMaskStack(std::max(kept, 1), std::move(labels));
}

}  // namespace motionseg
