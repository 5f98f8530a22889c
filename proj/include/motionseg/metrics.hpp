#pragma once

#include "motionseg/core.hpp"

#include <Eigen/Core>

#include <span>
#include <utility>
#include <vector>

namespace motionseg {

enum class Connectivity { Four, Eight };

struct ComponentLabels {
  std::vector<int> ids;  // component id per pixel, -1 for ignored pixels
  int count = 0;
};

// Groups equal-valued, adjacent pixels. Pixels with a negative value are
// ignored. Component ids follow first appearance in row-major order.
ComponentLabels connected_components(std::span<const int> labels, int height, int width,
                                     Connectivity connectivity = Connectivity::Four);

/// Pair-counting bookkeeping for ARI.
struct ContingencyTable {
  Eigen::MatrixXd counts;  // predicted clusters x ground-truth clusters
  Eigen::VectorXd row_sums;
  Eigen::VectorXd col_sums;
  double total = 0.0;
};

ContingencyTable contingency(std::span<const int> pred, std::span<const int> gt);

// Adjusted Rand index from a contingency table. A vanishing denominator only
// happens when both sides are identical trivial clusterings; that returns 1.
double adjusted_rand_index(const ContingencyTable& table);

// ARI restricted to pixels whose ground-truth label differs from the
// background label. Throws InvalidArgument when there is no foreground.
double fg_ari(std::span<const int> pred, std::span<const int> gt, int gt_background_label = 0);

struct Assignment {
  std::vector<std::pair<int, int>> matching;  // (row, col), sorted by row
  double total_cost = 0.0;
};

// Minimum-cost rectangular assignment of size min(rows, cols). Among optimal
// matchings the one with the lexicographically smallest column sequence (over
// the shorter side) is returned.
Assignment hungarian(const Eigen::MatrixXd& cost);

struct MiouOptions {
  bool foreground_only = false;  // evaluate only on gt != background pixels
  int gt_background_label = 0;
};

// Mean IoU of the optimal one-to-one segment matching, divided by the larger
// of the predicted and ground-truth segment counts.
double miou_hungarian(std::span<const int> pred, std::span<const int> gt,
                      const MiouOptions& options = {});

// Splits every label into connected components, keeps the k_keep largest
// that reach min_area_frac of the image, and merges all others into the
// largest component. Output labels are 0..kept-1 in decreasing size.
HardMaskStack postprocess_connected_components(const HardMaskStack& masks, const Lattice& lattice,
                                               int k_keep, double min_area_frac,
                                               Connectivity connectivity = Connectivity::Four);

}  // namespace motionseg
