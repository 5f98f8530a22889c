#include "motionseg/core.hpp"

#include "motionseg/errors.hpp"

#include <cmath>
#include <string>

namespace motionseg {

Lattice::Lattice(int height, int width) : height_(height), width_(width) {
  if (height < 1 || width < 1) {
    throw InvalidArgument("lattice dimensions must be positive, got " + std::to_string(height) +
                          "x" + std::to_string(width));
  }
  const Index n = size();
  xs_.resize(n);
  ys_.resize(n);
  for (Index i = 0; i < n; ++i) {
    xs_[i] = static_cast<double>(i % width_);
    ys_[i] = static_cast<double>(i / width_);
  }
}

void check_flow(const FlowField& flow, const Lattice& lattice) {
  if (flow.u.size() != lattice.size() || flow.v.size() != lattice.size()) {
    throw InvalidArgument("flow length " + std::to_string(flow.u.size()) + "/" +
                          std::to_string(flow.v.size()) + " does not match lattice size " +
                          std::to_string(lattice.size()));
  }
  if (!flow.u.allFinite() || !flow.v.allFinite()) {
    throw InvalidArgument("flow contains non-finite values");
  }
}

SoftMaskStack::SoftMaskStack(RowMatrix weights) : weights_(std::move(weights)) {
  if (weights_.rows() < 1) throw InvalidArgument("mask stack needs at least one region");
  for (Index i = 0; i < weights_.cols(); ++i) {
    double sum = 0.0;
    for (Index k = 0; k < weights_.rows(); ++k) {
      const double w = weights_(k, i);
      if (!(w >= -kSimplexTolerance && w <= 1.0 + kSimplexTolerance)) {
        throw InvalidArgument("mask weight outside [0,1] at pixel " + std::to_string(i));
      }
      sum += w;
    }
    if (std::abs(sum - 1.0) > kSimplexTolerance) {
      throw InvalidArgument("mask weights do not sum to 1 at pixel " + std::to_string(i));
    }
  }
}

HardMaskStack::HardMaskStack(int k, std::vector<int> labels) : k_(k), labels_(std::move(labels)) {
  if (k < 1) throw InvalidArgument("hard mask stack needs at least one region");
  for (size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] < 0 || labels_[i] >= k) {
      throw InvalidArgument("label " + std::to_string(labels_[i]) + " out of range at pixel " +
                            std::to_string(i));
    }
  }
}

SoftMaskStack HardMaskStack::to_soft() const {
  RowMatrix w = RowMatrix::Zero(k_, n());
  for (Index i = 0; i < n(); ++i) w((*this)[i], i) = 1.0;
  return SoftMaskStack(std::move(w));
}

std::vector<Index> HardMaskStack::counts() const {
  std::vector<Index> c(static_cast<size_t>(k_), 0);
  for (int label : labels_) ++c[static_cast<size_t>(label)];
  return c;
}

Logits::Logits(RowMatrix values) : values_(std::move(values)) {
  if (values_.rows() < 1) throw InvalidArgument("logits need at least one region");
  if (!values_.allFinite()) throw InvalidArgument("logits contain non-finite values");
}

SoftMaskStack softmax_masks(const Logits& logits) {
  const RowMatrix& z = logits.values();
  RowMatrix p(z.rows(), z.cols());
  for (Index i = 0; i < z.cols(); ++i) {
    const double top = z.col(i).maxCoeff();
    double sum = 0.0;
    for (Index k = 0; k < z.rows(); ++k) {
      p(k, i) = std::exp(z(k, i) - top);
      sum += p(k, i);
    }
    p.col(i) /= sum;
  }
  return SoftMaskStack(std::move(p));
}

HardMaskStack harden(const SoftMaskStack& masks) {
  std::vector<int> labels(static_cast<size_t>(masks.n()));
  for (Index i = 0; i < masks.n(); ++i) {
    int best = 0;
    for (int k = 1; k < masks.k(); ++k) {
      if (masks(k, i) > masks(best, i)) best = k;
    }
    labels[static_cast<size_t>(i)] = best;
  }
  return HardMaskStack(masks.k(), std::move(labels));
}

}  // namespace motionseg
