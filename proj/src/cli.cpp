#include "motionseg/cli.hpp"

#include "motionseg/errors.hpp"
#include "motionseg/fit.hpp"
#include "motionseg/likelihood.hpp"
#include "motionseg/metrics.hpp"
#include "motionseg/motion_model.hpp"
#include "motionseg/prior_io.hpp"
#include "motionseg/simulator.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <exception>
#include <fstream>
#include <functional>
#include <iostream>
#include <mutex>
#include <regex>
#include <set>
#include <thread>

namespace motionseg::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Size {
  int height = 64;
  int width = 64;
};

Size parse_size(const std::string& text) {
  static const std::regex re(R"((\d+)x(\d+))");
  std::smatch m;
  if (!std::regex_match(text, m, re)) throw InvalidArgument("size must look like HxW, got '" + text + "'");
  Size s{std::stoi(m[1]), std::stoi(m[2])};
  (void)Lattice(s.height, s.width);
  return s;
}

std::pair<int, int> parse_range(const std::string& text) {
  static const std::regex range(R"((\d+)-(\d+))"), single(R"(\d+)");
  std::smatch m;
  if (std::regex_match(text, m, range)) return {std::stoi(m[1]), std::stoi(m[2])};
  if (std::regex_match(text, single)) return {std::stoi(text), std::stoi(text)};
  throw InvalidArgument("object count must look like MIN-MAX, got '" + text + "'");
}

// Runs fn(i) for i in [0, count) on up to `threads` workers; the first
// failure by index is rethrown after all workers stop.
void parallel_for(size_t count, int threads, const std::function<void(size_t)>& fn) {
  std::vector<std::exception_ptr> errors(count);
  std::atomic<size_t> next{0};
  auto worker = [&] {
    for (size_t i = next++; i < count; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto workers = static_cast<size_t>(std::max(1, threads));
  if (workers == 1 || count <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (size_t w = 0; w < std::min(workers, count); ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

void write_json(const fs::path& file, const json& j) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw FormatError(file.string() + ": cannot open for writing");
  out << j.dump(2) << "\n";
}

struct Sequence {
  std::string name;  // empty for a bare sequence directory
  fs::path dir;
};

// A sequence directory or a directory of sequence directories.
std::vector<Sequence> discover(const fs::path& root) {
  if (!fs::is_directory(root)) throw FormatError(root.string() + ": not a directory");
  if (fs::exists(root / "manifest.json")) return {{"", root}};
  std::vector<Sequence> out;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory() && fs::exists(entry.path() / "manifest.json")) {
      out.push_back({entry.path().filename().string(), entry.path()});
    }
  }
  std::sort(out.begin(), out.end(), [](const Sequence& a, const Sequence& b) { return a.name < b.name; });
  if (out.empty()) throw FormatError(root.string() + ": no manifest.json found");
  return out;
}

double mean_or_nan(const std::vector<double>& v) {
  if (v.empty()) return std::nan("");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

json number_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

// --------------------------------------------------------------------------

struct GenerateArgs {
  std::string out;
  int scenes = 1;
  int frames = 3;
  std::string size = "64x64";
  std::string objects = "3-6";
  double p_static = 0.5;
  bool camera_motion = false;
  double flow_noise = 0.0;
  std::uint64_t seed = 0;
  bool perspective_violation = false;
  std::string scenario = "bernoulli";
  double rotation_std = 0.0;
  std::string config_out;
};

void cmd_generate(const GenerateArgs& a, int threads, std::ostream& out) {
  if (a.scenes < 1) throw InvalidArgument("--scenes must be at least 1");
  const Size size = parse_size(a.size);
  const auto [lo, hi] = parse_range(a.objects);
  SceneSpec base;
  base.height = size.height;
  base.width = size.width;
  base.min_objects = lo;
  base.max_objects = hi;
  base.p_static = a.p_static;
  base.camera_motion = a.camera_motion;
  base.flow_noise_sigma = a.flow_noise;
  base.frames = a.frames;
  base.perspective_violation = a.perspective_violation;
  base.rotation_std = a.rotation_std;
  if (a.scenario == "bernoulli") {
    base.scenario = MotionScenario::Bernoulli;
  } else if (a.scenario == "mixture") {
    base.scenario = MotionScenario::Mixture;
  } else {
    throw InvalidArgument("--scenario must be bernoulli or mixture");
  }
  base.validate();

  const fs::path root(a.out);
  fs::create_directories(root);
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < a.scenes; ++i) seeds.push_back(CounterRng::derive(a.seed, static_cast<std::uint64_t>(i)));

  json cfg = {{"command", "generate"},
              {"out", a.out},
              {"scenes", a.scenes},
              {"frames", a.frames},
              {"height", size.height},
              {"width", size.width},
              {"min_objects", lo},
              {"max_objects", hi},
              {"p_static", a.p_static},
              {"camera_motion", a.camera_motion},
              {"camera_scale", base.camera_scale},
              {"flow_noise_sigma", a.flow_noise},
              {"perspective_violation", a.perspective_violation},
              {"perspective_strength", base.perspective_strength},
              {"scenario", a.scenario},
              {"rotation_std", a.rotation_std},
              {"min_motion", base.min_motion},
              {"theta_cov_diagonal", std::vector<double>(base.theta_cov.diagonal().data(),
                                                         base.theta_cov.diagonal().data() + 6)},
              {"seed", a.seed},
              {"scene_seeds", seeds},
              {"threads", threads}};
  write_json(a.config_out.empty() ? root / "effective_config.json" : fs::path(a.config_out), cfg);

  std::vector<int> k_true(static_cast<size_t>(a.scenes));
  parallel_for(static_cast<size_t>(a.scenes), threads, [&](size_t i) {
    SceneSpec spec = base;
    spec.seed = seeds[i];
    const SequenceRecord rec = generate_sequence(spec);
    char name[32];
    std::snprintf(name, sizeof name, "scene_%04zu", i);
    write_sequence(rec, root / name);
    k_true[i] = rec.manifest.k_true;
  });
  for (int i = 0; i < a.scenes; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "scene_%04d", i);
    out << json{{"scene", name}, {"k_true", k_true[static_cast<size_t>(i)]}}.dump() << "\n";
  }
}

// --------------------------------------------------------------------------

struct FitArgs {
  std::string data;
  std::string out;
  std::string model = "affine";
  bool model_given = false;
  int k = 0;
  int iters = 800;
  double lr = 0.05;
  std::uint64_t seed = 0;
  std::string prior;
  double beta_start = 0.1;
  double beta_end = -0.1;
  int beta_anneal = 0;
  double gs_temp = 1.0;
  int samples = 3;
  bool warp_loss = false;
  bool postprocess = false;
  double min_area_frac = 0.001;
  int max_frames = 0;
  bool no_refine = false;
  std::string config_out;
};

struct FrameTask {
  size_t sequence;
  int frame;
};

void cmd_fit(const FitArgs& a, int threads, std::ostream& out) {
  MotionPrior prior;
  if (!a.prior.empty()) {
    prior = read_prior(a.prior);
    if (a.model_given && parse_motion_model(a.model) != prior.kind) {
      throw InvalidArgument("--model disagrees with the kind in --prior");
    }
  } else {
    prior = default_prior(parse_motion_model(a.model));
  }
  if (a.max_frames < 0) throw InvalidArgument("--max-frames must be non-negative");

  FitConfig base;
  base.k = std::max(a.k, 1);
  base.iters = a.iters;
  base.step_size = a.lr;
  base.seed = a.seed;
  base.objective.n_samples = a.samples;
  base.objective.gs_temperature = a.gs_temp;
  base.objective.beta_start = a.beta_start;
  base.objective.beta_end = a.beta_end;
  base.objective.beta_anneal_iters = a.beta_anneal;
  base.use_warp = a.warp_loss;
  base.min_area_frac = a.min_area_frac;
  base.refine = !a.no_refine;
  if (a.k < 0) throw InvalidArgument("--k must be positive");
  base.validate();

  const std::vector<Sequence> seqs = discover(a.data);
  std::vector<SequenceRecord> records;
  for (const Sequence& s : seqs) {
    records.push_back(read_sequence(s.dir));
    if (a.warp_loss && records.back().backward.empty()) {
      throw FormatError((s.dir / bflow_file(0)).string() +
                        ": missing backward flow; --warp-loss needs bflow files for every frame pair");
    }
  }

  const fs::path root(a.out);
  fs::create_directories(root);
  const ObjectiveConfig objective = base.resolved_objective();
  std::vector<int> ks;
  for (const auto& r : records) ks.push_back(a.k > 0 ? a.k : std::max(r.manifest.k_true, 1));
  json cfg = {{"command", "fit"},
              {"data", a.data},
              {"out", a.out},
              {"model", to_string(prior.kind)},
              {"prior", prior_to_json(prior)},
              {"prior_source", a.prior.empty() ? "default" : a.prior},
              {"k", a.k > 0 ? json(a.k) : json("k_true")},
              {"resolved_k", ks},
              {"iters", base.iters},
              {"lr", base.step_size},
              {"adam_beta1", base.adam_beta1},
              {"adam_beta2", base.adam_beta2},
              {"adam_eps", base.adam_eps},
              {"init_scale", base.init_scale},
              {"grad_clip", base.grad_clip},
              {"n_samples", objective.n_samples},
              {"gs_temperature", objective.gs_temperature},
              {"beta_start", objective.beta_start},
              {"beta_end", objective.beta_end},
              {"beta_anneal_iters", objective.beta_anneal_iters},
              {"prob_floor", objective.prob_floor},
              {"warp_loss", a.warp_loss},
              {"postprocess", a.postprocess},
              {"min_area_frac", base.min_area_frac},
              {"connectivity", 4},
              {"refine", base.refine},
              {"refine_rounds", base.refine_rounds},
              {"max_frames", a.max_frames},
              {"seed", a.seed},
              {"threads", threads}};
  write_json(a.config_out.empty() ? root / "effective_config.json" : fs::path(a.config_out), cfg);

  std::vector<FrameTask> tasks;
  for (size_t s = 0; s < records.size(); ++s) {
    const int frames = records[s].manifest.frames;
    const int limit = a.max_frames > 0 ? std::min(frames, a.max_frames) : frames;
    for (int t = 0; t < limit; ++t) tasks.push_back({s, t});
  }
  std::vector<std::string> lines(tasks.size());

  parallel_for(tasks.size(), threads, [&](size_t ti) {
    const FrameTask task = tasks[ti];
    const SequenceRecord& rec = records[task.sequence];
    const Lattice lattice = rec.lattice();
    const int t = task.frame;
    const int last = rec.manifest.frames - 1;
    // Flow describing the motion of frame t's pixels.
    auto flow_signal = [&](int f) -> const FlowField& {
      if (f < last) return rec.forward[static_cast<size_t>(f)];
      return rec.backward.empty() ? rec.forward[static_cast<size_t>(last - 1)]
                                  : rec.backward[static_cast<size_t>(last - 1)];
    };
    FitConfig cfg_t = base;
    cfg_t.k = ks[task.sequence];
    cfg_t.seed = CounterRng::derive(a.seed, task.sequence) ^ static_cast<std::uint64_t>(t);

    std::optional<WarpInputs> warp;
    if (a.warp_loss && last >= 1) {
      WarpInputs w;
      w.frame = rec.frame(t);
      if (t < last) {
        w.partner_frame = rec.frame(t + 1);
        w.partner_flow = flow_signal(t + 1);
        w.pair = {rec.forward[static_cast<size_t>(t)], rec.backward[static_cast<size_t>(t)]};
      } else {
        w.partner_frame = rec.frame(t - 1);
        w.partner_flow = flow_signal(t - 1);
        w.pair = {rec.backward[static_cast<size_t>(t - 1)], rec.forward[static_cast<size_t>(t - 1)]};
      }
      warp = std::move(w);
    } else {
      cfg_t.use_warp = false;
    }
    const FitResult result = fit_masks(flow_signal(t), lattice, prior, cfg_t, warp ? &*warp : nullptr);
    const fs::path dir = seqs[task.sequence].name.empty() ? root : root / seqs[task.sequence].name;
    fs::create_directories(dir);
    const HardMaskStack& masks = a.postprocess ? *result.report.processed_masks : *result.report.raw_masks;
    write_mask(masks, dir / mask_file(t));
    char report_name[40];
    std::snprintf(report_name, sizeof report_name, "fit_report_%04d.json", t);
    write_json(dir / report_name, {{"frame", t},
                                   {"k", cfg_t.k},
                                   {"seed", cfg_t.seed},
                                   {"iterations", result.report.iterations},
                                   {"final_loss", result.report.final_loss},
                                   {"trajectory", result.report.trajectory},
                                   {"refined", cfg_t.refine},
                                   {"nll_before_refine", result.report.nll_before_refine},
                                   {"nll_after_refine", result.report.nll_after_refine},
                                   {"postprocessed", a.postprocess}});
    json line = {{"frame", t},
                 {"final_loss", result.report.final_loss},
                 {"iterations", result.report.iterations},
                 {"wall_seconds", result.report.wall_seconds}};
    if (!seqs[task.sequence].name.empty()) line["scene"] = seqs[task.sequence].name;
    lines[ti] = line.dump();
  });
  for (const auto& l : lines) out << l << "\n";
}

// --------------------------------------------------------------------------

struct EvalArgs {
  std::string pred;
  std::string gt;
  bool postprocess = false;
  bool fg_only = false;
  int k_keep = 0;
  double min_area_frac = 0.001;
  int max_frames = 0;
  std::string config_out;
};

void cmd_eval(const EvalArgs& a, int threads, std::ostream& out) {
  if (a.k_keep < 0) throw InvalidArgument("--k-keep must be non-negative");
  if (a.max_frames < 0) throw InvalidArgument("--max-frames must be non-negative");
  if (!(a.min_area_frac > 0.0 && a.min_area_frac < 1.0)) throw InvalidArgument("--min-area-frac must lie in (0, 1)");
  const std::vector<Sequence> gts = discover(a.gt);
  const fs::path pred_root(a.pred);
  if (!fs::is_directory(pred_root)) throw FormatError(pred_root.string() + ": not a directory");

  json cfg = {{"command", "eval"},       {"pred", a.pred},
              {"gt", a.gt},              {"postprocess", a.postprocess},
              {"fg_only", a.fg_only},    {"k_keep", a.k_keep > 0 ? json(a.k_keep) : json("max(pred labels, k_true)")},
              {"min_area_frac", a.min_area_frac}, {"connectivity", 4},
              {"include_background_in_miou", !a.fg_only}, {"max_frames", a.max_frames},
              {"threads", threads}};
  write_json(a.config_out.empty() ? pred_root / "effective_config.json" : fs::path(a.config_out), cfg);

  struct Row {
    std::string scene;
    int frame;
    double fg_ari;
    double miou;
  };
  std::vector<FrameTask> tasks;
  std::vector<SequenceManifest> manifests;
  for (size_t s = 0; s < gts.size(); ++s) {
    manifests.push_back(read_manifest(gts[s].dir));
    const int frames = manifests.back().frames;
    const int limit = a.max_frames > 0 ? std::min(frames, a.max_frames) : frames;
    for (int t = 0; t < limit; ++t) tasks.push_back({s, t});
  }
  std::vector<Row> rows(tasks.size());
  parallel_for(tasks.size(), threads, [&](size_t ti) {
    const auto [s, t] = tasks[ti];
    const SequenceManifest& m = manifests[s];
    const Lattice lattice(m.height, m.width);
    const HardMaskStack gt = read_mask(gts[s].dir / mask_file(t), lattice, m.k_true);
    const fs::path pdir = gts[s].name.empty() ? pred_root : pred_root / gts[s].name;
    const fs::path pfile = pdir / mask_file(t);
    if (!fs::exists(pfile)) {
      throw FormatError(pfile.string() + ": missing predicted mask for frame " + std::to_string(t));
    }
    HardMaskStack pred = read_mask(pfile, lattice, 256);
    if (a.postprocess) {
      const std::set<int> distinct(pred.labels().begin(), pred.labels().end());
      const int k_keep = a.k_keep > 0 ? a.k_keep : std::max(static_cast<int>(distinct.size()), m.k_true);
      pred = postprocess_connected_components(pred, lattice, k_keep, a.min_area_frac);
    }
    const bool has_fg = std::any_of(gt.labels().begin(), gt.labels().end(), [](int l) { return l != 0; });
    const double ari = has_fg ? fg_ari(pred.labels(), gt.labels(), 0) : std::nan("");
    double miou = std::nan("");
    if (!a.fg_only || has_fg) miou = miou_hungarian(pred.labels(), gt.labels(), {a.fg_only, 0});
    rows[ti] = {gts[s].name, t, ari, miou};
  });

  std::vector<double> all_ari, all_miou;
  json per_sequence = json::array();
  for (size_t s = 0; s < gts.size(); ++s) {
    std::vector<double> ari, miou;
    for (size_t ti = 0; ti < tasks.size(); ++ti) {
      if (tasks[ti].sequence != s) continue;
      const Row& r = rows[ti];
      json line = {{"frame", r.frame}, {"fg_ari", number_or_null(r.fg_ari)}, {"miou", number_or_null(r.miou)}};
      if (!r.scene.empty()) line["scene"] = r.scene;
      out << line.dump() << "\n";
      if (std::isfinite(r.fg_ari)) ari.push_back(r.fg_ari);
      if (std::isfinite(r.miou)) miou.push_back(r.miou);
    }
    per_sequence.push_back({{"scene", gts[s].name},
                            {"fg_ari", number_or_null(mean_or_nan(ari))},
                            {"miou", number_or_null(mean_or_nan(miou))}});
    all_ari.insert(all_ari.end(), ari.begin(), ari.end());
    all_miou.insert(all_miou.end(), miou.begin(), miou.end());
  }
  out << json{{"summary", true},
              {"frames", tasks.size()},
              {"fg_ari", number_or_null(mean_or_nan(all_ari))},
              {"miou", number_or_null(mean_or_nan(all_miou))},
              {"sequences", per_sequence}}
             .dump()
      << "\n";
}

// --------------------------------------------------------------------------

struct CalibrateArgs {
  std::string data;
  std::string model = "affine";
  std::string out;
  std::string config_out;
};

void cmd_calibrate(const CalibrateArgs& a, int threads, std::ostream& out) {
  const MotionModelKind kind = parse_motion_model(a.model);
  const std::vector<Sequence> seqs = discover(a.data);
  std::vector<SequenceRecord> records(seqs.size());
  parallel_for(seqs.size(), threads, [&](size_t i) { records[i] = read_sequence(seqs[i].dir); });
  const CalibrationConfig config;
  const fs::path out_file(a.out);
  const fs::path cfg_file = a.config_out.empty() ? out_file.parent_path() / "effective_config.json"
                                                 : fs::path(a.config_out);
  write_json(cfg_file, {{"command", "calibrate"},
                        {"data", a.data},
                        {"model", to_string(kind)},
                        {"out", a.out},
                        {"sequences", seqs.size()},
                        {"foreground_threshold", config.foreground_threshold},
                        {"edge_percentile", config.edge_percentile},
                        {"min_region_pixels", config.min_region_pixels},
                        {"residual_percentile", config.residual_percentile},
                        {"connectivity", config.eight_connected ? 8 : 4},
                        {"spd_jitter", config.spd_jitter},
                        {"threads", threads}});
  const CalibrationReport report = calibrate_prior(records, kind, config);
  if (out_file.has_parent_path()) fs::create_directories(out_file.parent_path());
  write_prior(report.prior, out_file);
  out << json{{"kept_regions", report.kept_thetas.size()},
              {"candidate_regions", report.candidate_regions},
              {"no_motion_samples", report.no_motion_samples},
              {"prior", prior_to_json(report.prior)}}
             .dump()
      << "\n";
}

// --------------------------------------------------------------------------

struct BenchArgs {
  std::string size = "64x64";
  int k = 4;
  int repeats = 3;
  std::uint64_t seed = 0;
  std::string out = ".";
  std::string config_out;
};

void cmd_bench(const BenchArgs& a, int threads, std::ostream& out) {
  if (a.repeats < 1) throw InvalidArgument("--repeats must be at least 1");
  if (a.k < 1) throw InvalidArgument("--k must be at least 1");
  const Size size = parse_size(a.size);
  if (a.k > size.width) throw InvalidArgument("--k exceeds the image width");
  const Lattice lattice(size.height, size.width);
  const MotionPrior prior = default_prior(MotionModelKind::Affine);

  const fs::path root(a.out);
  write_json(a.config_out.empty() ? root / "effective_config.json" : fs::path(a.config_out),
             {{"command", "bench"}, {"height", size.height}, {"width", size.width}, {"k", a.k},
              {"repeats", a.repeats}, {"seed", a.seed}, {"model", "affine"},
              {"prior", prior_to_json(prior)}, {"threads", threads}});

  // K vertical stripes of near-equal area and a random flow.
  std::vector<int> labels(static_cast<size_t>(lattice.size()));
  for (Index i = 0; i < lattice.size(); ++i) labels[static_cast<size_t>(i)] = lattice.col(i) * a.k / size.width;
  const HardMaskStack hard(a.k, labels);
  const SoftMaskStack soft = hard.to_soft();
  CounterRng rng(a.seed);
  FlowField flow = FlowField::zeros(lattice.size());
  for (Index i = 0; i < lattice.size(); ++i) {
    flow.u[i] = 2.0 * rng.normal();
    flow.v[i] = 2.0 * rng.normal();
  }

  using clock = std::chrono::steady_clock;
  double efficient = 0.0, oracle = 0.0;
  const auto t0 = clock::now();
  for (int r = 0; r < a.repeats; ++r) efficient = nll_affine(flow, soft, lattice, prior);
  const auto t1 = clock::now();
  for (int r = 0; r < a.repeats; ++r) oracle = nll_oracle(flow, hard, lattice, prior);
  const auto t2 = clock::now();
  const double te = std::chrono::duration<double>(t1 - t0).count() / a.repeats;
  const double to = std::chrono::duration<double>(t2 - t1).count() / a.repeats;
  const double rel = std::abs(efficient - oracle) / std::max(std::abs(oracle), 1e-300);
  const std::vector<Index> counts = hard.counts();
  out << json{{"height", size.height},
              {"width", size.width},
              {"k", a.k},
              {"region_pixels", counts},
              {"repeats", a.repeats},
              {"efficient_seconds", te},
              {"oracle_seconds", to},
              {"speedup", te > 0.0 ? to / te : std::numeric_limits<double>::infinity()},
              {"efficient_nll", efficient},
              {"oracle_nll", oracle},
              {"relative_difference", rel}}
             .dump()
      << "\n";
  if (!(rel <= 1e-6)) throw NumericalError("efficient and oracle likelihoods disagree");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Motion-pattern segmentation toolkit", args.empty() ? "motionseg" : args[0]};
  app.require_subcommand(1);
  app.fallthrough();
  int threads = 1;
  app.add_option("--threads", threads, "worker threads over scenes/frames")->check(CLI::PositiveNumber);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "generate synthetic sequences");
  g->add_option("--out", gen.out, "output directory")->required();
  g->add_option("--scenes", gen.scenes, "number of scenes");
  g->add_option("--frames", gen.frames, "frames per scene");
  g->add_option("--size", gen.size, "HxW");
  g->add_option("--objects", gen.objects, "MIN-MAX objects per scene");
  g->add_option("--p-static", gen.p_static, "probability an object is stationary");
  g->add_flag("--camera-motion", gen.camera_motion, "add global camera motion");
  g->add_option("--flow-noise", gen.flow_noise, "Gaussian flow noise sigma (px)");
  g->add_option("--seed", gen.seed, "seed");
  g->add_flag("--perspective-violation", gen.perspective_violation, "add a quadratic flow term per object");
  g->add_option("--scenario", gen.scenario, "bernoulli|mixture");
  g->add_option("--rotation-std", gen.rotation_std, "extra per-step rotation std (radians)");
  g->add_option("--config-out", gen.config_out, "effective_config.json location");

  FitArgs fit;
  auto* f = app.add_subcommand("fit", "fit segmentations to sequence flow");
  f->add_option("--data", fit.data, "sequence or dataset directory")->required();
  f->add_option("--out", fit.out, "prediction directory")->required();
  auto* model_opt = f->add_option("--model", fit.model, "affine|translation");
  f->add_option("--k", fit.k, "regions (default: manifest k_true)");
  f->add_option("--iters", fit.iters, "iterations");
  f->add_option("--lr", fit.lr, "Adam step size");
  f->add_option("--seed", fit.seed, "seed");
  f->add_option("--prior", fit.prior, "prior JSON file");
  f->add_option("--beta-start", fit.beta_start, "initial KL weight");
  f->add_option("--beta-end", fit.beta_end, "final KL weight");
  f->add_option("--beta-anneal", fit.beta_anneal, "anneal iterations (default iters/2)");
  f->add_option("--gs-temp", fit.gs_temp, "Gumbel-softmax temperature");
  f->add_option("--samples", fit.samples, "Gumbel samples per iteration");
  f->add_flag("--warp-loss", fit.warp_loss, "add the warp consistency loss");
  f->add_flag("--postprocess", fit.postprocess, "write post-processed masks");
  f->add_option("--min-area-frac", fit.min_area_frac, "post-processing area threshold");
  f->add_option("--max-frames", fit.max_frames, "fit only the first N frames per sequence");
  f->add_flag("--no-refine", fit.no_refine, "skip the hard-label refinement after Adam");
  f->add_option("--config-out", fit.config_out, "effective_config.json location");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "score predicted masks");
  e->add_option("--pred", ev.pred, "prediction directory")->required();
  e->add_option("--gt", ev.gt, "ground-truth directory")->required();
  e->add_flag("--postprocess", ev.postprocess, "post-process predictions first");
  e->add_flag("--fg-only", ev.fg_only, "mIoU on foreground pixels only");
  e->add_option("--k-keep", ev.k_keep, "components kept by post-processing");
  e->add_option("--min-area-frac", ev.min_area_frac, "post-processing area threshold");
  e->add_option("--max-frames", ev.max_frames, "evaluate only the first N frames per sequence");
  e->add_option("--config-out", ev.config_out, "effective_config.json location");

  CalibrateArgs cal;
  auto* c = app.add_subcommand("calibrate", "estimate a prior covariance from data");
  c->add_option("--data", cal.data, "dataset directory")->required();
  c->add_option("--model", cal.model, "affine|translation");
  c->add_option("--out", cal.out, "prior JSON output")->required();
  c->add_option("--config-out", cal.config_out, "effective_config.json location");

  BenchArgs bench;
  auto* b = app.add_subcommand("bench", "time efficient vs full-covariance likelihood");
  b->add_option("--size", bench.size, "HxW");
  b->add_option("--k", bench.k, "regions");
  b->add_option("--repeats", bench.repeats, "timed repetitions");
  b->add_option("--seed", bench.seed, "seed");
  b->add_option("--out", bench.out, "directory for effective_config.json");
  b->add_option("--config-out", bench.config_out, "effective_config.json location");

  try {
    std::vector<std::string> rest(args.size() > 1 ? args.begin() + 1 : args.end(), args.end());
    std::reverse(rest.begin(), rest.end());
    app.parse(rest);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& ex) {
    err << "error: " << ex.what() << "\n";
    return kInvalidArgument;
  }

  try {
    if (g->parsed()) cmd_generate(gen, threads, out);
    if (f->parsed()) {
      fit.model_given = model_opt->count() > 0;
      cmd_fit(fit, threads, out);
    }
    if (e->parsed()) cmd_eval(ev, threads, out);
    if (c->parsed()) cmd_calibrate(cal, threads, out);
    if (b->parsed()) cmd_bench(bench, threads, out);
  } catch (const InvalidArgument& ex) {
    err << "invalid argument: " << ex.what() << "\n";
    return kInvalidArgument;
  } catch (const FormatError& ex) {
    err << "format error: " << ex.what() << "\n";
    return kFormatError;
  } catch (const NumericalError& ex) {
    err << "numerical error: " << ex.what() << "\n";
    return kNumericalError;
  } catch (const fs::filesystem_error& ex) {
    err << "format error: " << ex.what() << "\n";
    return kFormatError;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return kUnexpected;
  }
  return kOk;
}

}  // namespace motionseg::cli
