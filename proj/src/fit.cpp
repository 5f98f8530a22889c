#include "motionseg/fit.hpp"

#include "motionseg/errors.hpp"
#include "motionseg/likelihood.hpp"

#include <chrono>
#include <cmath>
#include <limits>

namespace motionseg {

void FitConfig::validate() const {
  if (k < 1 || k > 255) throw InvalidArgument("k must lie in [1, 255]");
  if (iters < 1) throw InvalidArgument("iters must be at least 1");
  if (!(step_size > 0.0)) throw InvalidArgument("step size must be positive");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw InvalidArgument("Adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0) || !(init_scale >= 0.0) || !(grad_clip >= 0.0)) {
    throw InvalidArgument("Adam eps, init scale and clip must be non-negative");
  }
  if (!(min_area_frac > 0.0 && min_area_frac < 1.0)) throw InvalidArgument("min_area_frac must lie in (0, 1)");
  if (k_keep < 0) throw InvalidArgument("k_keep must be non-negative");
  if (refine_rounds < 0) throw InvalidArgument("refine_rounds must be non-negative");
  resolved_objective().validate();
}

ObjectiveConfig FitConfig::resolved_objective() const {
  ObjectiveConfig c = objective;
  if (c.beta_anneal_iters <= 0) c.beta_anneal_iters = std::max(1, iters / 2);
  return c;
}

namespace {

struct Adam {
  RowMatrix m, v;
  double b1t = 1.0, b2t = 1.0;

  Adam(int k, Index n) : m(RowMatrix::Zero(k, n)), v(RowMatrix::Zero(k, n)) {}

  void step(RowMatrix& x, const RowMatrix& g, const FitConfig& c) {
    b1t *= c.adam_beta1;
    b2t *= c.adam_beta2;
    m = c.adam_beta1 * m + (1.0 - c.adam_beta1) * g;
    v = c.adam_beta2 * v + (1.0 - c.adam_beta2) * g.cwiseProduct(g);
    const double lr = c.step_size / (1.0 - b1t);
    const double bc2 = 1.0 - b2t;
    for (Index i = 0; i < x.size(); ++i) {
      x.data()[i] -= lr * m.data()[i] / (std::sqrt(v.data()[i] / bc2) + c.adam_eps);
    }
  }
};

void clip(RowMatrix& g, double limit) {
  if (limit <= 0.0) return;
  const double norm = g.norm();
  if (norm > limit) g *= limit / norm;
}

RowMatrix initial_logits(int k, Index n, double scale, std::uint64_t seed) {
  CounterRng rng(CounterRng::derive(seed, 1));
  RowMatrix z(k, n);
  for (Index i = 0; i < z.size(); ++i) z.data()[i] = scale * rng.normal();
  return z;
}

constexpr double kImprovement = 1e-9;
constexpr double kRefinedLogit = 10.0;

std::vector<RegionMoments> region_moments(const HardPartitionScorer& scorer, const std::vector<int>& labels,
                                          int k) {
  std::vector<RegionMoments> regions(static_cast<size_t>(k));
  for (size_t i = 0; i < labels.size(); ++i) regions[static_cast<size_t>(labels[i])] += scorer.pixel(static_cast<Index>(i));
  return regions;
}

double move_delta(const HardPartitionScorer& scorer, const std::vector<RegionMoments>& regions,
                  const std::vector<double>& terms, const RegionMoments& part, int from, int to) {
  RegionMoments a = regions[static_cast<size_t>(from)];
  a -= part;
  RegionMoments b = regions[static_cast<size_t>(to)];
  b += part;
  const double na = a.count() < 0.5 ? 0.0 : scorer.region_term(a);
  return na + scorer.region_term(b) - terms[static_cast<size_t>(from)] - terms[static_cast<size_t>(to)];
}

constexpr size_t kMaxRepartitionAtoms = 12;

bool repartition_pairs(const HardPartitionScorer& scorer, const std::vector<RegionMoments>& parts,
                       std::vector<int>& owner, std::vector<RegionMoments>& regions, std::vector<double>& terms,
                       int k) {
  const auto term = [&](const RegionMoments& r) { return r.count() < 0.5 ? 0.0 : scorer.region_term(r); };
  bool changed = false;
  for (int a = 0; a < k; ++a) {
    for (int b = a + 1; b < k; ++b) {
      std::vector<size_t> atoms;
      for (size_t c = 0; c < parts.size(); ++c)
        if (owner[c] == a || owner[c] == b) atoms.push_back(c);
      if (atoms.size() < 2 || atoms.size() > kMaxRepartitionAtoms) continue;
      const double current = terms[static_cast<size_t>(a)] + terms[static_cast<size_t>(b)];
      RegionMoments joint = regions[static_cast<size_t>(a)];
      joint += regions[static_cast<size_t>(b)];
      double best = current - kImprovement;
      std::uint32_t best_mask = 0;
      bool found = false;
      const std::uint32_t limit = 1u << (atoms.size() - 1);
      for (std::uint32_t mask = 0; mask < limit; ++mask) {
        RegionMoments rb;
        for (size_t j = 0; j + 1 < atoms.size(); ++j)
          if (mask >> j & 1u) rb += parts[atoms[j + 1]];
        RegionMoments ra = joint;
        ra -= rb;
        const double total = term(ra) + term(rb);
        if (total < best) {
          best = total;
          best_mask = mask;
          found = true;
        }
      }
      if (!found) continue;
      RegionMoments ra, rb;
      owner[atoms[0]] = a;
      ra += parts[atoms[0]];
      for (size_t j = 0; j + 1 < atoms.size(); ++j) {
        const bool to_b = best_mask >> j & 1u;
        owner[atoms[j + 1]] = to_b ? b : a;
        (to_b ? rb : ra) += parts[atoms[j + 1]];
      }
      regions[static_cast<size_t>(a)] = ra;
      regions[static_cast<size_t>(b)] = rb;
      terms[static_cast<size_t>(a)] = term(ra);
      terms[static_cast<size_t>(b)] = term(rb);
      changed = true;
    }
  }
  return changed;
}

bool component_moves(const HardPartitionScorer& scorer, const Lattice& lattice, std::vector<int>& labels, int k,
                     Connectivity connectivity) {
  const ComponentLabels comps = connected_components(labels, lattice.height(), lattice.width(), connectivity);
  std::vector<RegionMoments> parts(static_cast<size_t>(comps.count));
  std::vector<int> owner(static_cast<size_t>(comps.count));
  for (size_t i = 0; i < labels.size(); ++i) {
    const auto c = static_cast<size_t>(comps.ids[i]);
    parts[c] += scorer.pixel(static_cast<Index>(i));
    owner[c] = labels[i];
  }
  std::vector<RegionMoments> regions(static_cast<size_t>(k));
  for (size_t c = 0; c < parts.size(); ++c) regions[static_cast<size_t>(owner[c])] += parts[c];
  std::vector<double> terms(static_cast<size_t>(k));
  for (int j = 0; j < k; ++j) terms[static_cast<size_t>(j)] = scorer.region_term(regions[static_cast<size_t>(j)]);

  bool changed = false;
  for (int pass = 0; pass < 50; ++pass) {
    bool moved = false;
    for (size_t c = 0; c < parts.size(); ++c) {
      const int from = owner[c];
      int best = from;
      double best_delta = -kImprovement;
      for (int to = 0; to < k; ++to) {
        if (to == from) continue;
        const double d = move_delta(scorer, regions, terms, parts[c], from, to);
        if (d < best_delta) {
          best_delta = d;
          best = to;
        }
      }
      if (best == from) continue;
      regions[static_cast<size_t>(from)] -= parts[c];
      regions[static_cast<size_t>(best)] += parts[c];
      terms[static_cast<size_t>(from)] = scorer.region_term(regions[static_cast<size_t>(from)]);
      terms[static_cast<size_t>(best)] = scorer.region_term(regions[static_cast<size_t>(best)]);
      owner[c] = best;
      moved = true;
    }
    for (bool merged = true; merged;) {
      merged = false;
      double best_delta = -kImprovement;
      int best_a = -1, best_b = -1;
      for (int a = 0; a < k; ++a) {
        if (regions[static_cast<size_t>(a)].count() < 0.5) continue;
        for (int b = a + 1; b < k; ++b) {
          if (regions[static_cast<size_t>(b)].count() < 0.5) continue;
          const double d = move_delta(scorer, regions, terms, regions[static_cast<size_t>(b)], b, a);
          if (d < best_delta) {
            best_delta = d;
            best_a = a;
            best_b = b;
          }
        }
      }
      if (best_a < 0) break;
      regions[static_cast<size_t>(best_a)] += regions[static_cast<size_t>(best_b)];
      regions[static_cast<size_t>(best_b)] = RegionMoments{};
      terms[static_cast<size_t>(best_a)] = scorer.region_term(regions[static_cast<size_t>(best_a)]);
      terms[static_cast<size_t>(best_b)] = 0.0;
      for (int& o : owner)
        if (o == best_b) o = best_a;
      merged = moved = true;
    }
    if (repartition_pairs(scorer, parts, owner, regions, terms, k)) moved = true;
    if (!moved) break;
    changed = true;
  }
  for (size_t i = 0; i < labels.size(); ++i) labels[i] = owner[static_cast<size_t>(comps.ids[i])];
  return changed;
}

bool pixel_moves(const HardPartitionScorer& scorer, const Lattice& lattice, std::vector<int>& labels, int k) {
  std::vector<RegionMoments> regions = region_moments(scorer, labels, k);
  std::vector<double> terms(static_cast<size_t>(k));
  for (int j = 0; j < k; ++j) terms[static_cast<size_t>(j)] = scorer.region_term(regions[static_cast<size_t>(j)]);
  const int h = lattice.height(), w = lattice.width();
  bool changed = false;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const auto i = static_cast<size_t>(y) * static_cast<size_t>(w) + static_cast<size_t>(x);
      const int from = labels[i];
      int candidates[4];
      int nc = 0;
      const auto consider = [&](int qx, int qy) {
        if (qx < 0 || qy < 0 || qx >= w || qy >= h) return;
        const int l = labels[static_cast<size_t>(qy) * static_cast<size_t>(w) + static_cast<size_t>(qx)];
        if (l == from) return;
        for (int j = 0; j < nc; ++j)
          if (candidates[j] == l) return;
        candidates[nc++] = l;
      };
      consider(x - 1, y);
      consider(x + 1, y);
      consider(x, y - 1);
      consider(x, y + 1);
      if (nc == 0) continue;
      const RegionMoments p = scorer.pixel(static_cast<Index>(i));
      int best = from;
      double best_delta = -kImprovement;
      for (int j = 0; j < nc; ++j) {
        const double d = move_delta(scorer, regions, terms, p, from, candidates[j]);
        if (d < best_delta) {
          best_delta = d;
          best = candidates[j];
        }
      }
      if (best == from) continue;
      regions[static_cast<size_t>(from)] -= p;
      regions[static_cast<size_t>(best)] += p;
      terms[static_cast<size_t>(from)] = scorer.region_term(regions[static_cast<size_t>(from)]);
      terms[static_cast<size_t>(best)] = scorer.region_term(regions[static_cast<size_t>(best)]);
      labels[i] = best;
      changed = true;
    }
  }
  return changed;
}

}  // namespace

std::vector<int> refine_partition(const FlowField& flow, const Lattice& lattice, const MotionPrior& prior,
                                  std::vector<int> labels, int k, int max_rounds, Connectivity connectivity) {
  check_flow(flow, lattice);
  if (static_cast<Index>(labels.size()) != lattice.size()) throw InvalidArgument("labels do not match lattice");
  for (int l : labels)
    if (l < 0 || l >= k) throw InvalidArgument("label out of range");
  const HardPartitionScorer scorer(flow, lattice, prior);
  for (int round = 0; round < max_rounds; ++round) {
    const bool a = component_moves(scorer, lattice, labels, k, connectivity);
    bool b = false;
    for (int sweep = 0; sweep < 20 && pixel_moves(scorer, lattice, labels, k); ++sweep) b = true;
    if (!a && !b) break;
  }
  return labels;
}

FitResult fit_masks(const FlowField& flow, const Lattice& lattice, const MotionPrior& prior,
                    const FitConfig& config, const WarpInputs* warp) {
  config.validate();
  prior.validate();
  check_flow(flow, lattice);
  if (config.use_warp && warp == nullptr) throw InvalidArgument("warp loss requested without warp inputs");
  const bool use_warp = config.use_warp && warp != nullptr;
  if (use_warp) check_flow(warp->partner_flow, lattice);
  const ObjectiveConfig objective = config.resolved_objective();
  const auto start = std::chrono::steady_clock::now();

  const Index n = lattice.size();
  RowMatrix z = initial_logits(config.k, n, config.init_scale, config.seed);
  RowMatrix z_partner;
  if (use_warp) z_partner = z;
  Adam adam(config.k, n), adam_partner(config.k, n);
  GumbelRng rng(CounterRng::derive(config.seed, 2));

  FitReport report;
  report.trajectory.reserve(static_cast<size_t>(config.iters));
  for (int it = 0; it < config.iters; ++it) {
    const std::vector<RowMatrix> noise = draw_sample_noise(rng, objective.n_samples, config.k, n);
    const Logits logits(z);
    LossEvaluation eval = evaluate_loss(logits, flow, lattice, prior, objective, it, noise, true);
    double loss = eval.value;
    RowMatrix grad = std::move(eval.grad);

    if (use_warp) {
      const Logits partner(z_partner);
      LossEvaluation pe = evaluate_loss(partner, warp->partner_flow, lattice, prior, objective, it, noise, true);
      const SoftMaskStack p1 = softmax_masks(logits);
      const SoftMaskStack p2 = softmax_masks(partner);
      const WarpLossResult w = warp_loss_with_gradient(warp->frame, warp->partner_frame, warp->pair, p1, p2,
                                                       lattice, objective.prob_floor);
      loss += w.value;
      grad += softmax_backward(p1, w.grad1, 1.0);
      RowMatrix grad_partner = pe.grad + softmax_backward(p2, w.grad2, 1.0);
      if (!std::isfinite(pe.value + w.value)) throw Divergence("non-finite partner loss", it);
      clip(grad_partner, config.grad_clip);
      adam_partner.step(z_partner, grad_partner, config);
    }
    if (!std::isfinite(loss) || !grad.allFinite()) throw Divergence("non-finite loss", it);
    report.trajectory.push_back(loss);
    clip(grad, config.grad_clip);
    adam.step(z, grad, config);
  }

  report.iterations = config.iters;
  report.final_loss = report.trajectory.back();
  Logits final_logits(z);
  if (config.refine && config.refine_rounds > 0) {
    const HardMaskStack adam_masks = harden(softmax_masks(final_logits));
    const HardPartitionScorer scorer(flow, lattice, prior);
    report.nll_before_refine = scorer.total(adam_masks.labels(), config.k);
    const std::vector<int> refined = refine_partition(flow, lattice, prior, adam_masks.labels(), config.k,
                                                      config.refine_rounds, config.connectivity);
    report.nll_after_refine = scorer.total(refined, config.k);
    RowMatrix onehot = RowMatrix::Zero(config.k, n);
    for (Index i = 0; i < n; ++i) onehot(refined[static_cast<size_t>(i)], i) = kRefinedLogit;
    final_logits = Logits(onehot);
  }
  report.raw_masks = harden(softmax_masks(final_logits));
  report.processed_masks = decode(final_logits, lattice, config.resolved_k_keep(), config.min_area_frac,
                                  config.connectivity);
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {final_logits, std::move(report)};
}

HardMaskStack decode(const Logits& logits, const Lattice& lattice, int k_keep, double min_area_frac,
                     Connectivity connectivity) {
  if (logits.n() != lattice.size()) throw InvalidArgument("logits do not match lattice");
  return postprocess_connected_components(harden(softmax_masks(logits)), lattice, k_keep, min_area_frac,
                                          connectivity);
}

}  // namespace motionseg
