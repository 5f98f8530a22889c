#pragma once

#include "motionseg/core.hpp"
#include "motionseg/metrics.hpp"
#include "motionseg/motion_model.hpp"
#include "motionseg/objective.hpp"
#include "motionseg/warp.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace motionseg {

struct FitConfig {
  int k = 4;
  int iters = 800;
  double step_size = 0.05;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double init_scale = 0.01;
  double grad_clip = 10.0;  // 2-norm; 0 disables
  std::uint64_t seed = 0;
  ObjectiveConfig objective = auto_anneal_objective();
  bool use_warp = false;
  int k_keep = 0;  // 0: k
  double min_area_frac = 0.001;
  Connectivity connectivity = Connectivity::Four;
  bool refine = true;  // greedy hard-label descent on the exact likelihood after Adam
  int refine_rounds = 8;

  void validate() const;
  // Objective with beta_anneal_iters <= 0 replaced by iters / 2.
  ObjectiveConfig resolved_objective() const;
  int resolved_k_keep() const { return k_keep > 0 ? k_keep : k; }

  static ObjectiveConfig auto_anneal_objective() {
    ObjectiveConfig c;
    c.beta_anneal_iters = 0;
    return c;
  }
};

// The second frame of a warp pair plus everything the partner's own L_beta
// needs. The partner's logits are optimized jointly with the main ones.
struct WarpInputs {
  Frame frame;          // frame of the logits being fit
  Frame partner_frame;  // adjacent frame
  FlowField partner_flow;
  WarpPair pair;        // forward: frame -> partner, backward: partner -> frame
};

struct FitReport {
  double final_loss = 0.0;
  double nll_before_refine = 0.0;  // hard-mask likelihood of the Adam result
  double nll_after_refine = 0.0;
  std::vector<double> trajectory;  // loss evaluated at every iteration
  double wall_seconds = 0.0;
  int iterations = 0;
  std::optional<HardMaskStack> raw_masks;
  std::optional<HardMaskStack> processed_masks;
};

struct FitResult {
  Logits logits;
  FitReport report;
};

FitResult fit_masks(const FlowField& flow, const Lattice& lattice, const MotionPrior& prior,
                    const FitConfig& config, const WarpInputs* warp = nullptr);

// Greedy descent on the hard-mask likelihood. Each round first moves whole
// connected components between labels (empty labels included), then merges
// label pairs, then moves single pixels to a neighbouring label. Stops after
// max_rounds or when a round changes nothing. Never increases the likelihood.
std::vector<int> refine_partition(const FlowField& flow, const Lattice& lattice, const MotionPrior& prior,
                                  std::vector<int> labels, int k, int max_rounds,
                                  Connectivity connectivity = Connectivity::Four);

// harden(softmax(logits)) followed by connected-component post-processing.
HardMaskStack decode(const Logits& logits, const Lattice& lattice, int k_keep,
                     double min_area_frac = 0.001, Connectivity connectivity = Connectivity::Four);

}  // namespace motionseg
