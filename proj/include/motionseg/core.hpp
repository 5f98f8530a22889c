#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <vector>

namespace motionseg {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Pixel lattice of an H x W raster. Coordinates are raw pixel units with x
/// increasing rightward and y increasing downward; pixels are enumerated
/// row-major, so pixel i sits at (i % width, i / width).
class Lattice {
 public:
  Lattice(int height, int width);

  int height() const { return height_; }
  int width() const { return width_; }
  Index size() const { return static_cast<Index>(height_) * width_; }

  double x(Index i) const { return xs_[i]; }
  double y(Index i) const { return ys_[i]; }
  const Vector& xs() const { return xs_; }
  const Vector& ys() const { return ys_; }

  Index index(int col, int row) const { return static_cast<Index>(row) * width_ + col; }
  int col(Index i) const { return static_cast<int>(i % width_); }
  int row(Index i) const { return static_cast<int>(i / width_); }

  bool operator==(const Lattice& other) const {
    return height_ == other.height_ && width_ == other.width_;
  }

 private:
  int height_;
  int width_;
  Vector xs_;
  Vector ys_;
};

/// Per-pixel displacement in pixels/frame.
struct FlowField {
  Vector u;
  Vector v;

  FlowField() = default;
  FlowField(Vector u_, Vector v_) : u(std::move(u_)), v(std::move(v_)) {}
  static FlowField zeros(Index n) { return {Vector::Zero(n), Vector::Zero(n)}; }

  Index size() const { return u.size(); }
};

// Throws InvalidArgument on a length mismatch or non-finite entries.
void check_flow(const FlowField& flow, const Lattice& lattice);

/// K x n relaxed assignment; every column lies on the simplex.
class SoftMaskStack {
 public:
  static constexpr double kSimplexTolerance = 1e-6;

  explicit SoftMaskStack(RowMatrix weights);

  int k() const { return static_cast<int>(weights_.rows()); }
  Index n() const { return weights_.cols(); }
  double operator()(int region, Index pixel) const { return weights_(region, pixel); }
  const RowMatrix& weights() const { return weights_; }

 private:
  RowMatrix weights_;
};

/// One label per pixel in [0, k).
class HardMaskStack {
 public:
  HardMaskStack(int k, std::vector<int> labels);

  int k() const { return k_; }
  Index n() const { return static_cast<Index>(labels_.size()); }
  int operator[](Index pixel) const { return labels_[static_cast<size_t>(pixel)]; }
  const std::vector<int>& labels() const { return labels_; }

  // One-hot expansion as a K x n stack.
  SoftMaskStack to_soft() const;
  // Number of pixels carrying each label.
  std::vector<Index> counts() const;

  bool operator==(const HardMaskStack& other) const {
    return k_ == other.k_ && labels_ == other.labels_;
  }

 private:
  int k_;
  std::vector<int> labels_;
};

/// Unconstrained K x n mask logits.
class Logits {
 public:
  explicit Logits(RowMatrix values);

  int k() const { return static_cast<int>(values_.rows()); }
  Index n() const { return values_.cols(); }
  const RowMatrix& values() const { return values_; }

 private:
  RowMatrix values_;
};

// Per-pixel softmax over the region axis, stabilized by max subtraction.
SoftMaskStack softmax_masks(const Logits& logits);

// Per-pixel argmax; ties go to the lowest region index.
HardMaskStack harden(const SoftMaskStack& masks);

}  // namespace motionseg
