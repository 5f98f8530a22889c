#include "motionseg/objective.hpp"

#include "motionseg/errors.hpp"
#include "motionseg/likelihood.hpp"

#include <algorithm>
#include <cmath>

namespace motionseg {

void ObjectiveConfig::validate() const {
  if (n_samples < 1) throw InvalidArgument("n_samples must be at least 1");
  if (!(gs_temperature > 0.0)) throw InvalidArgument("gs_temperature must be positive");
  if (beta_anneal_iters < 1) throw InvalidArgument("beta_anneal_iters must be at least 1");
  if (!(prob_floor > 0.0 && prob_floor < 1.0)) throw InvalidArgument("prob_floor must lie in (0, 1)");
  if (!std::isfinite(beta_start) || !std::isfinite(beta_end)) throw InvalidArgument("beta must be finite");
}

RowMatrix draw_gumbel_noise(GumbelRng& rng, int k, Index n) {
  RowMatrix g(k, n);
  for (int r = 0; r < k; ++r)
    for (Index i = 0; i < n; ++i) g(r, i) = rng.gumbel();
  return g;
}

std::vector<RowMatrix> draw_sample_noise(GumbelRng& rng, int n_samples, int k, Index n) {
  std::vector<RowMatrix> out;
  out.reserve(static_cast<size_t>(n_samples));
  for (int s = 0; s < n_samples; ++s) out.push_back(draw_gumbel_noise(rng, k, n));
  return out;
}

SoftMaskStack gumbel_softmax_with_noise(const Logits& logits, const RowMatrix& noise,
                                        double temperature) {
  if (!(temperature > 0.0)) throw InvalidArgument("temperature must be positive");
  if (noise.rows() != logits.k() || noise.cols() != logits.n()) {
    throw InvalidArgument("noise shape does not match logits");
  }
  RowMatrix z = (logits.values() + noise) / temperature;
  return softmax_masks(Logits(std::move(z)));
}

SoftMaskStack gumbel_softmax_sample(const Logits& logits, double temperature, GumbelRng& rng) {
  const RowMatrix noise = draw_gumbel_noise(rng, logits.k(), logits.n());
  return gumbel_softmax_with_noise(logits, noise, temperature);
}

namespace {

// Floored, renormalized column and its normalizer.
void floor_column(const RowMatrix& w, Index i, double floor, std::vector<double>& p, double& z) {
  const int k = static_cast<int>(w.rows());
  z = 0.0;
  for (int r = 0; r < k; ++r) {
    p[static_cast<size_t>(r)] = std::max(w(r, i), floor);
    z += p[static_cast<size_t>(r)];
  }
  for (int r = 0; r < k; ++r) p[static_cast<size_t>(r)] /= z;
}

}  // namespace

double kl_to_uniform(const SoftMaskStack& probs, double prob_floor) {
  const int k = probs.k();
  const double kd = static_cast<double>(k);
  std::vector<double> p(static_cast<size_t>(k));
  double total = 0.0;
  for (Index i = 0; i < probs.n(); ++i) {
    double z = 0.0;
    floor_column(probs.weights(), i, prob_floor, p, z);
    double kl = 0.0;
    for (double pk : p) kl += pk * std::log(kd * pk);
    total += kl;
  }
  return total;
}

RowMatrix kl_to_uniform_gradient(const SoftMaskStack& probs, double prob_floor) {
  const int k = probs.k();
  const double kd = static_cast<double>(k);
  RowMatrix grad = RowMatrix::Zero(k, probs.n());
  std::vector<double> p(static_cast<size_t>(k));
  for (Index i = 0; i < probs.n(); ++i) {
    double z = 0.0;
    floor_column(probs.weights(), i, prob_floor, p, z);
    double mean = 0.0;
    for (double pk : p) mean += pk * std::log(kd * pk);
    for (int r = 0; r < k; ++r) {
      if (probs(r, i) > prob_floor) grad(r, i) = (std::log(kd * p[static_cast<size_t>(r)]) - mean) / z;
    }
  }
  return grad;
}

double beta_at(int iter, const ObjectiveConfig& config) {
  if (iter < 0) throw InvalidArgument("iteration must be non-negative");
  if (iter >= config.beta_anneal_iters) return config.beta_end;
  const double t = static_cast<double>(iter) / static_cast<double>(config.beta_anneal_iters);
  return config.beta_start + t * (config.beta_end - config.beta_start);
}

RowMatrix softmax_backward(const SoftMaskStack& masks, const RowMatrix& grad_masks,
                           double temperature) {
  const int k = masks.k();
  RowMatrix out(k, masks.n());
  for (Index i = 0; i < masks.n(); ++i) {
    double dot = 0.0;
    for (int r = 0; r < k; ++r) dot += masks(r, i) * grad_masks(r, i);
    for (int r = 0; r < k; ++r) out(r, i) = masks(r, i) * (grad_masks(r, i) - dot) / temperature;
  }
  return out;
}

LossEvaluation evaluate_loss(const Logits& logits, const FlowField& flow, const Lattice& lattice,
                             const MotionPrior& prior, const ObjectiveConfig& config, int iter,
                             std::span<const RowMatrix> noise, bool with_gradient) {
  config.validate();
  if (static_cast<int>(noise.size()) != config.n_samples) {
    throw InvalidArgument("expected one noise matrix per sample");
  }
  if (logits.n() != lattice.size()) throw InvalidArgument("logits do not match lattice");
  check_flow(flow, lattice);

  LossEvaluation out;
  out.beta = beta_at(iter, config);
  if (with_gradient) out.grad = RowMatrix::Zero(logits.k(), logits.n());
  const double inv_n = 1.0 / static_cast<double>(config.n_samples);

  double nll_sum = 0.0;
  for (const RowMatrix& g : noise) {
    const SoftMaskStack sample = gumbel_softmax_with_noise(logits, g, config.gs_temperature);
    if (with_gradient) {
      const NllGradient ng = nll_with_gradient(flow, sample, lattice, prior);
      nll_sum += ng.value;
      out.grad += inv_n * softmax_backward(sample, ng.grad, config.gs_temperature);
    } else {
      nll_sum += nll(flow, sample, lattice, prior);
    }
  }
  out.nll_mean = nll_sum * inv_n;

  const SoftMaskStack probs = softmax_masks(logits);
  out.kl = kl_to_uniform(probs, config.prob_floor);
  out.value = out.nll_mean + out.beta * out.kl;
  if (with_gradient && out.beta != 0.0) {
    const RowMatrix gk = kl_to_uniform_gradient(probs, config.prob_floor);
    out.grad += out.beta * softmax_backward(probs, gk, 1.0);
  }
  return out;
}

double loss_beta(const Logits& logits, const FlowField& flow, const Lattice& lattice,
                 const MotionPrior& prior, const ObjectiveConfig& config, int iter,
                 const GumbelRng& rng) {
  GumbelRng replay = rng;
  const auto noise = draw_sample_noise(replay, config.n_samples, logits.k(), logits.n());
  return evaluate_loss(logits, flow, lattice, prior, config, iter, noise, false).value;
}

RowMatrix loss_grad(const Logits& logits, const FlowField& flow, const Lattice& lattice,
                    const MotionPrior& prior, const ObjectiveConfig& config, int iter,
                    const GumbelRng& rng) {
  GumbelRng replay = rng;
  const auto noise = draw_sample_noise(replay, config.n_samples, logits.k(), logits.n());
  return evaluate_loss(logits, flow, lattice, prior, config, iter, noise, true).grad;
}

}  // namespace motionseg
