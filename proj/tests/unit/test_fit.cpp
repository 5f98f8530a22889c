#include "test_main.hpp"

#include "motionseg/errors.hpp"
#include "motionseg/fit.hpp"
#include "motionseg/likelihood.hpp"
#include "motionseg/metrics.hpp"
#include "motionseg/simulator.hpp"

#include <cmath>
#include <map>

using namespace motionseg;

namespace {

// Left half moves right, right half moves left.
FlowField split_flow(const Lattice& l, std::vector<int>& gt) {
  FlowField f = FlowField::zeros(l.size());
  gt.assign(static_cast<size_t>(l.size()), 0);
  for (Index i = 0; i < l.size(); ++i) {
    const bool left = l.col(i) < l.width() / 2;
    f.u[i] = left ? 3.0 : -3.0;
    gt[static_cast<size_t>(i)] = left ? 1 : 2;
  }
  return f;
}

SequenceRecord standard_scene() {
  SceneSpec s;
  s.height = 32;
  s.width = 32;
  s.min_objects = 2;
  s.max_objects = 3;
  s.p_static = 0.0;
  s.seed = 5;
  return generate_sequence(s);
}

Logits logits_from_labels(const std::vector<int>& labels, int k, double gain = 8.0) {
  RowMatrix z = RowMatrix::Zero(k, static_cast<Index>(labels.size()));
  for (size_t i = 0; i < labels.size(); ++i) z(labels[i], static_cast<Index>(i)) = gain;
  return Logits(z);
}

bool same_partition(const std::vector<int>& a, const std::vector<int>& b) {
  std::map<int, int> ab, ba;
  for (size_t i = 0; i < a.size(); ++i) {
    auto [it, fresh] = ab.emplace(a[i], b[i]);
    if (!fresh && it->second != b[i]) return false;
    auto [jt, fresh2] = ba.emplace(b[i], a[i]);
    if (!fresh2 && jt->second != a[i]) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("fit config defaults and validation") {
  const FitConfig c;
  CHECK(c.iters == 800);
  CHECK(c.step_size == 0.05);
  CHECK(c.adam_beta1 == 0.9);
  CHECK(c.adam_beta2 == 0.999);
  CHECK(c.adam_eps == 1e-8);
  CHECK(c.init_scale == 0.01);
  CHECK(c.resolved_objective().beta_anneal_iters == 400);
  CHECK(c.resolved_k_keep() == 4);
  FitConfig bad;
  bad.iters = 0;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  bad = FitConfig();
  bad.step_size = 0.0;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  bad = FitConfig();
  bad.k = 0;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  FitConfig fixed;
  fixed.objective.beta_anneal_iters = 77;
  CHECK(fixed.resolved_objective().beta_anneal_iters == 77);
}

TEST_CASE("a single region gives a flat trajectory") {
  const Lattice l(16, 16);
  std::vector<int> gt;
  const FlowField f = split_flow(l, gt);
  FitConfig cfg;
  cfg.k = 1;
  cfg.iters = 30;
  cfg.objective.beta_start = cfg.objective.beta_end = 0.0;
  const FitResult r = fit_masks(f, l, default_prior(MotionModelKind::Affine), cfg);
  CHECK(r.report.iterations == 30);
  CHECK(r.report.trajectory.size() == 30);
  for (double v : r.report.trajectory) CHECK(v == r.report.trajectory.front());
  CHECK(r.report.final_loss == r.report.trajectory.back());
}

TEST_CASE("two opposite translations are separated") {
  const Lattice l(64, 64);
  std::vector<int> gt;
  const FlowField f = split_flow(l, gt);
  FitConfig cfg;
  cfg.seed = 3;
  const FitResult r = fit_masks(f, l, default_prior(MotionModelKind::Affine), cfg);
  REQUIRE(r.report.processed_masks.has_value());
  const double ari = fg_ari(r.report.processed_masks->labels(), gt);
  MESSAGE("FG-ARI " << ari);
  CHECK(ari >= 0.95);
}

TEST_CASE("the final loss does not exceed the first on five seeds") {
  const SequenceRecord rec = standard_scene();
  const Lattice l = rec.lattice();
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    FitConfig cfg;
    cfg.iters = 200;
    cfg.seed = seed;
    const FitResult r = fit_masks(rec.forward[0], l, default_prior(MotionModelKind::Affine), cfg);
    CHECK(r.report.trajectory.back() <= r.report.trajectory.front());
  }
}

TEST_CASE("fitting is deterministic, with and without the warp term") {
  const SequenceRecord rec = standard_scene();
  const Lattice l = rec.lattice();
  FitConfig cfg;
  cfg.iters = 40;
  cfg.seed = 9;
  const MotionPrior prior = default_prior(MotionModelKind::Affine);
  const FitResult a = fit_masks(rec.forward[0], l, prior, cfg);
  const FitResult b = fit_masks(rec.forward[0], l, prior, cfg);
  CHECK(a.logits.values() == b.logits.values());
  CHECK(a.report.trajectory == b.report.trajectory);
  CHECK(*a.report.processed_masks == *b.report.processed_masks);

  const WarpInputs warp{rec.frame(0), rec.frame(1), rec.backward[0], {rec.forward[0], rec.backward[0]}};
  cfg.use_warp = true;
  const FitResult c = fit_masks(rec.forward[0], l, prior, cfg, &warp);
  const FitResult d = fit_masks(rec.forward[0], l, prior, cfg, &warp);
  CHECK(c.logits.values() == d.logits.values());
  CHECK(c.report.trajectory == d.report.trajectory);
  CHECK(c.report.trajectory != a.report.trajectory);

  FitConfig other = cfg;
  other.use_warp = false;
  other.seed = 10;
  CHECK(fit_masks(rec.forward[0], l, prior, other).logits.values() != a.logits.values());
}

TEST_CASE("warp fitting requires warp inputs") {
  const Lattice l(8, 8);
  FitConfig cfg;
  cfg.iters = 2;
  cfg.use_warp = true;
  CHECK_THROWS_AS(fit_masks(FlowField::zeros(64), l, default_prior(MotionModelKind::Affine), cfg), InvalidArgument);
}

TEST_CASE("a non-finite loss raises a divergence error with the iteration") {
  const Lattice l(8, 8);
  FlowField f = FlowField::zeros(64);
  f.u.setConstant(1e200);
  FitConfig cfg;
  cfg.iters = 5;
  try {
    fit_masks(f, l, default_prior(MotionModelKind::Affine), cfg);
    FAIL("expected divergence");
  } catch (const Divergence& e) {
    CHECK(e.iteration() == 0);
  }
}

TEST_CASE("translation prior fits run too") {
  const Lattice l(24, 24);
  std::vector<int> gt;
  const FlowField f = split_flow(l, gt);
  FitConfig cfg;
  cfg.k = 3;
  cfg.iters = 300;
  const FitResult r = fit_masks(f, l, default_prior(MotionModelKind::Translation), cfg);
  CHECK(fg_ari(r.report.processed_masks->labels(), gt) >= 0.9);
  CHECK(r.report.raw_masks->k() == 3);
}

TEST_CASE("decode leaves clean masks unchanged up to relabeling") {
  const Lattice l(12, 12);
  std::vector<int> labels(144, 0);
  for (Index i = 0; i < 144; ++i) {
    if (l.col(i) < 5 && l.row(i) < 6) labels[static_cast<size_t>(i)] = 2;
    if (l.col(i) >= 8) labels[static_cast<size_t>(i)] = 1;
  }
  const HardMaskStack out = decode(logits_from_labels(labels, 3), l, 3);
  CHECK(same_partition(out.labels(), labels));
}

TEST_CASE("decode separates two blobs of one region") {
  const Lattice l(12, 12);
  std::vector<int> labels(144, 0);
  for (Index i = 0; i < 144; ++i) {
    if (l.col(i) < 3) labels[static_cast<size_t>(i)] = 1;
    if (l.col(i) >= 9) labels[static_cast<size_t>(i)] = 1;
  }
  const HardMaskStack out = decode(logits_from_labels(labels, 2), l, 2);
  CHECK(out[l.index(0, 0)] != out[l.index(11, 0)]);
  CHECK(out.k() == 2);
}

TEST_CASE("decode merges a 3-pixel speck on 128x128 into the largest mask") {
  const Lattice l(128, 128);
  std::vector<int> labels(static_cast<size_t>(l.size()), 0);
  for (Index i = 0; i < l.size(); ++i)
    if (l.col(i) >= 90) labels[static_cast<size_t>(i)] = 1;
  labels[static_cast<size_t>(l.index(20, 20))] = 2;
  labels[static_cast<size_t>(l.index(21, 20))] = 2;
  labels[static_cast<size_t>(l.index(22, 20))] = 2;
  const HardMaskStack out = decode(logits_from_labels(labels, 3), l, 3);
  CHECK(out.k() == 2);
  CHECK(out[l.index(21, 20)] == out[l.index(0, 0)]);
  CHECK(out[l.index(0, 0)] != out[l.index(127, 0)]);
}

TEST_CASE("property: refinement never increases the hard-mask likelihood") {
  CounterRng rng(91);
  for (int trial = 0; trial < 20; ++trial) {
    const Lattice l(rng.uniform_int(6, 16), rng.uniform_int(6, 16));
    const int k = rng.uniform_int(1, 4);
    FlowField f = FlowField::zeros(l.size());
    for (Index i = 0; i < l.size(); ++i) {
      f.u[i] = (l.col(i) < l.width() / 2 ? 2.0 : -1.0) + 0.3 * rng.normal();
      f.v[i] = 0.3 * rng.normal();
    }
    std::vector<int> labels(static_cast<size_t>(l.size()));
    for (int& v : labels) v = rng.uniform_int(0, k - 1);
    const MotionPrior prior =
        trial % 2 == 0 ? default_prior(MotionModelKind::Affine) : default_prior(MotionModelKind::Translation);
    const HardPartitionScorer scorer(f, l, prior);
    const std::vector<int> refined = refine_partition(f, l, prior, labels, k, 8);
    CHECK(scorer.total(refined, k) <= scorer.total(labels, k) + 1e-9);
    for (int v : refined) CHECK((v >= 0 && v < k));
    CHECK(refine_partition(f, l, prior, labels, k, 8) == refined);
    CHECK(refine_partition(f, l, prior, labels, k, 0) == labels);
  }
}

TEST_CASE("refinement recovers a swapped block and reports its effect") {
  const Lattice l(16, 16);
  std::vector<int> gt;
  const FlowField f = split_flow(l, gt);
  std::vector<int> labels(gt.size());
  for (size_t i = 0; i < gt.size(); ++i) labels[i] = gt[i] - 1;
  for (Index i = 0; i < l.size(); ++i)
    if (l.row(i) < 4 && l.col(i) < 4) labels[static_cast<size_t>(i)] = 1;
  const MotionPrior prior = default_prior(MotionModelKind::Affine);
  const std::vector<int> refined = refine_partition(f, l, prior, labels, 2, 8);
  CHECK(same_partition(refined, gt));

  FitConfig cfg;
  cfg.k = 2;
  cfg.iters = 50;
  const FitResult r = fit_masks(f, l, prior, cfg);
  CHECK(r.report.nll_after_refine <= r.report.nll_before_refine + 1e-9);
  CHECK(static_cast<int>(r.report.trajectory.size()) == cfg.iters);
  cfg.refine = false;
  const FitResult plain = fit_masks(f, l, prior, cfg);
  CHECK(plain.report.nll_before_refine == 0.0);
  CHECK(plain.report.trajectory == r.report.trajectory);
}

TEST_CASE("refinement escapes interleaved stripes that mix both motions") {
  const Lattice l(24, 24);
  std::vector<int> gt;
  const FlowField f = split_flow(l, gt);
  const int stripe_label[24] = {2, 2, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 2, 2, 2, 2, 2, 0, 0, 0, 0, 1, 1, 1};
  std::vector<int> labels(gt.size());
  for (Index i = 0; i < l.size(); ++i) labels[static_cast<size_t>(i)] = stripe_label[l.col(i)];
  const MotionPrior prior = default_prior(MotionModelKind::Affine);
  const HardPartitionScorer scorer(f, l, prior);
  const std::vector<int> refined = refine_partition(f, l, prior, labels, 3, 8);
  CHECK(scorer.total(refined, 3) < scorer.total(labels, 3));
  std::vector<int> truth(gt.size());
  for (size_t i = 0; i < gt.size(); ++i) truth[i] = gt[i] - 1;
  CHECK(scorer.total(refined, 3) <= scorer.total(truth, 3) + 1e-6);
}

TEST_CASE("refinement input validation") {
  const Lattice l(4, 4);
  const FlowField f = FlowField::zeros(l.size());
  const MotionPrior prior = default_prior(MotionModelKind::Affine);
  CHECK_THROWS_AS(refine_partition(f, l, prior, std::vector<int>(15, 0), 2, 1), InvalidArgument);
  CHECK_THROWS_AS(refine_partition(f, l, prior, std::vector<int>(16, 2), 2, 1), InvalidArgument);
  FitConfig cfg;
  cfg.refine_rounds = -1;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
}
