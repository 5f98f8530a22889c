#pragma once

#include "motionseg/core.hpp"
#include "motionseg/motion_model.hpp"
#include "motionseg/random.hpp"

#include <span>
#include <vector>

namespace motionseg {

struct ObjectiveConfig {
  int n_samples = 3;
  double gs_temperature = 1.0;
  double beta_start = 0.1;
  double beta_end = -0.1;
  int beta_anneal_iters = 5000;
  double prob_floor = 1e-8;

  void validate() const;
};

using GumbelRng = CounterRng;

// K x n standard Gumbel draws.
RowMatrix draw_gumbel_noise(GumbelRng& rng, int k, Index n);

// One noise matrix per sample, drawn in sample order.
std::vector<RowMatrix> draw_sample_noise(GumbelRng& rng, int n_samples, int k, Index n);

// softmax((logits + noise) / temperature) per pixel.
SoftMaskStack gumbel_softmax_with_noise(const Logits& logits, const RowMatrix& noise,
                                        double temperature);
SoftMaskStack gumbel_softmax_sample(const Logits& logits, double temperature, GumbelRng& rng);

// Sum over pixels of KL(p || uniform), with p floored and renormalized.
double kl_to_uniform(const SoftMaskStack& probs, double prob_floor = 1e-8);

// d kl_to_uniform / d p (the floor blocks the gradient below prob_floor).
RowMatrix kl_to_uniform_gradient(const SoftMaskStack& probs, double prob_floor = 1e-8);

double beta_at(int iter, const ObjectiveConfig& config);

// Backpropagates dL/dm through m = softmax(z / temperature).
RowMatrix softmax_backward(const SoftMaskStack& masks, const RowMatrix& grad_masks,
                           double temperature);

struct LossEvaluation {
  double value = 0.0;
  double nll_mean = 0.0;
  double kl = 0.0;
  double beta = 0.0;
  RowMatrix grad;  // d value / d logits; empty when not requested
};

// L_beta with explicit per-sample noise (noise.size() == n_samples).
LossEvaluation evaluate_loss(const Logits& logits, const FlowField& flow, const Lattice& lattice,
                             const MotionPrior& prior, const ObjectiveConfig& config, int iter,
                             std::span<const RowMatrix> noise, bool with_gradient = true);

// Both replay the noise from a copy of rng, so equal rng states give
// matching value and gradient.
double loss_beta(const Logits& logits, const FlowField& flow, const Lattice& lattice,
                 const MotionPrior& prior, const ObjectiveConfig& config, int iter,
                 const GumbelRng& rng);
RowMatrix loss_grad(const Logits& logits, const FlowField& flow, const Lattice& lattice,
                    const MotionPrior& prior, const ObjectiveConfig& config, int iter,
                    const GumbelRng& rng);

}  // namespace motionseg
