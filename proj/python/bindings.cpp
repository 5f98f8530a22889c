#include "motionseg/cli.hpp"
#include "motionseg/errors.hpp"
#include "motionseg/fit.hpp"
#include "motionseg/likelihood.hpp"
#include "motionseg/metrics.hpp"
#include "motionseg/motion_model.hpp"
#include "motionseg/objective.hpp"
#include "motionseg/prior_io.hpp"
#include "motionseg/simulator.hpp"

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <sstream>

namespace py = pybind11;
using namespace motionseg;

namespace {

using FloatArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using IntArray = py::array_t<int, py::array::c_style | py::array::forcecast>;

void require_ndim(const py::buffer_info& b, py::ssize_t ndim, const char* what) {
  if (b.ndim != ndim) throw InvalidArgument(std::string(what) + " must have " + std::to_string(ndim) + " dimensions");
}

// (2, H, W) array -> flow on an H x W lattice.
FlowField to_flow(const FloatArray& a, Lattice& lattice_out) {
  const py::buffer_info b = a.request();
  require_ndim(b, 3, "flow");
  if (b.shape[0] != 2) throw InvalidArgument("flow must have shape (2, H, W)");
  lattice_out = Lattice(static_cast<int>(b.shape[1]), static_cast<int>(b.shape[2]));
  const Index n = lattice_out.size();
  const auto* p = static_cast<const double*>(b.ptr);
  return {Eigen::Map<const Vector>(p, n), Eigen::Map<const Vector>(p + n, n)};
}

FloatArray from_flow(const FlowField& f, int h, int w) {
  FloatArray out({py::ssize_t{2}, py::ssize_t{h}, py::ssize_t{w}});
  auto* p = out.mutable_data();
  const Index n = f.size();
  std::copy(f.u.data(), f.u.data() + n, p);
  std::copy(f.v.data(), f.v.data() + n, p + n);
  return out;
}

std::vector<int> to_labels(const IntArray& a, const Lattice& lattice) {
  const py::buffer_info b = a.request();
  require_ndim(b, 2, "labels");
  if (b.shape[0] != lattice.height() || b.shape[1] != lattice.width()) {
    throw InvalidArgument("labels do not match the flow lattice");
  }
  const auto* p = static_cast<const int*>(b.ptr);
  return {p, p + lattice.size()};
}

std::vector<int> flat_labels(const IntArray& a) {
  const auto* p = a.data();
  return {p, p + a.size()};
}

IntArray from_labels(const std::vector<int>& labels, int h, int w) {
  IntArray out({py::ssize_t{h}, py::ssize_t{w}});
  std::copy(labels.begin(), labels.end(), out.mutable_data());
  return out;
}

RowMatrix to_stack(const FloatArray& a, const Lattice& lattice, const char* what) {
  const py::buffer_info b = a.request();
  require_ndim(b, 3, what);
  if (b.shape[1] != lattice.height() || b.shape[2] != lattice.width()) {
    throw InvalidArgument(std::string(what) + " do not match the flow lattice");
  }
  return Eigen::Map<const RowMatrix>(static_cast<const double*>(b.ptr), b.shape[0], lattice.size());
}

py::dict sequence_to_dict(const SequenceRecord& rec) {
  py::dict d;
  py::list frames, forward, backward, masks;
  for (const auto& f : rec.frames) {
    py::array_t<std::uint8_t> a({py::ssize_t{rec.height}, py::ssize_t{rec.width}, py::ssize_t{3}});
    std::copy(f.begin(), f.end(), a.mutable_data());
    frames.append(a);
  }
  for (const auto& f : rec.forward) forward.append(from_flow(f, rec.height, rec.width));
  for (const auto& f : rec.backward) backward.append(from_flow(f, rec.height, rec.width));
  for (const auto& m : rec.masks) masks.append(from_labels(m.labels(), rec.height, rec.width));
  d["frames"] = frames;
  d["forward"] = forward;
  d["backward"] = backward;
  d["masks"] = masks;
  d["k_true"] = rec.manifest.k_true;
  d["seed"] = rec.manifest.seed;
  d["flow_noise_sigma"] = rec.manifest.flow_noise_sigma;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Motion-pattern segmentation from optical flow";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<InvalidArgument>(m, "InvalidArgument", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<NumericalError>(m, "NumericalError", base.ptr());

  py::class_<MotionPrior>(m, "MotionPrior")
      .def_property_readonly("kind", [](const MotionPrior& p) { return to_string(p.kind); })
      .def_readwrite("mean", &MotionPrior::mean)
      .def_readwrite("cov", &MotionPrior::cov)
      .def_readwrite("noise_var", &MotionPrior::noise_var)
      .def("validate", &MotionPrior::validate)
      .def("to_json", [](const MotionPrior& p) { return prior_to_json(p).dump(); })
      .def("__repr__", [](const MotionPrior& p) { return "MotionPrior(" + prior_to_json(p).dump() + ")"; });

  m.def("default_prior", [](const std::string& kind) { return default_prior(parse_motion_model(kind)); },
        py::arg("kind") = "affine");
  m.def("translation_prior", &translation_prior, py::arg("tau2"), py::arg("noise_var"), py::arg("mean_x") = 0.0,
        py::arg("mean_y") = 0.0);
  m.def("read_prior", [](const std::string& path) { return read_prior(path); });
  m.def("write_prior", [](const MotionPrior& p, const std::string& path) { write_prior(p, path); });

  m.def(
      "nll",
      [](const FloatArray& flow, const FloatArray& masks, const MotionPrior& prior) {
        Lattice lattice(1, 1);
        const FlowField f = to_flow(flow, lattice);
        return nll(f, SoftMaskStack(to_stack(masks, lattice, "masks")), lattice, prior);
      },
      py::arg("flow"), py::arg("masks"), py::arg("prior"),
      "Negative log marginal likelihood of a (2, H, W) flow under (K, H, W) soft masks.");
  m.def(
      "nll_oracle",
      [](const FloatArray& flow, const IntArray& labels, int k, const MotionPrior& prior) {
        Lattice lattice(1, 1);
        const FlowField f = to_flow(flow, lattice);
        return nll_oracle(f, HardMaskStack(k, to_labels(labels, lattice)), lattice, prior);
      },
      py::arg("flow"), py::arg("labels"), py::arg("k"), py::arg("prior"));
  m.def(
      "kl_to_uniform",
      [](const Eigen::Ref<const RowMatrix>& probs, double floor) { return kl_to_uniform(SoftMaskStack(probs), floor); },
      py::arg("probs"), py::arg("prob_floor") = 1e-8);

  m.def(
      "fit",
      [](const FloatArray& flow, const MotionPrior& prior, int k, int iters, std::uint64_t seed, double step_size,
         bool refine, int k_keep, double min_area_frac) {
        Lattice lattice(1, 1);
        const FlowField f = to_flow(flow, lattice);
        FitConfig cfg;
        cfg.k = k;
        cfg.iters = iters;
        cfg.seed = seed;
        cfg.step_size = step_size;
        cfg.refine = refine;
        cfg.k_keep = k_keep;
        cfg.min_area_frac = min_area_frac;
        std::optional<FitResult> fitted;
        {
          py::gil_scoped_release release;
          fitted.emplace(fit_masks(f, lattice, prior, cfg));
        }
        const FitResult& r = *fitted;
        py::dict d;
        d["raw"] = from_labels(r.report.raw_masks->labels(), lattice.height(), lattice.width());
        d["labels"] = from_labels(r.report.processed_masks->labels(), lattice.height(), lattice.width());
        d["logits"] = r.logits.values();
        d["trajectory"] = r.report.trajectory;
        d["final_loss"] = r.report.final_loss;
        d["nll_before_refine"] = r.report.nll_before_refine;
        d["nll_after_refine"] = r.report.nll_after_refine;
        return d;
      },
      py::arg("flow"), py::arg("prior"), py::arg("k") = 4, py::arg("iters") = 800, py::arg("seed") = 0,
      py::arg("step_size") = 0.05, py::arg("refine") = true, py::arg("k_keep") = 0,
      py::arg("min_area_frac") = 0.001);

  m.def(
      "generate",
      [](int height, int width, int min_objects, int max_objects, double p_static, int frames, std::uint64_t seed,
         double flow_noise, bool camera_motion, double rotation_std) {
        SceneSpec s;
        s.height = height;
        s.width = width;
        s.min_objects = min_objects;
        s.max_objects = max_objects;
        s.p_static = p_static;
        s.frames = frames;
        s.seed = seed;
        s.flow_noise_sigma = flow_noise;
        s.camera_motion = camera_motion;
        s.rotation_std = rotation_std;
        return sequence_to_dict(generate_sequence(s));
      },
      py::arg("height") = 64, py::arg("width") = 64, py::arg("min_objects") = 3, py::arg("max_objects") = 6,
      py::arg("p_static") = 0.5, py::arg("frames") = 2, py::arg("seed") = 0, py::arg("flow_noise") = 0.0,
      py::arg("camera_motion") = false, py::arg("rotation_std") = 0.0);
  m.def("read_sequence", [](const std::string& path) { return sequence_to_dict(read_sequence(path)); });

  m.def(
      "fg_ari", [](const IntArray& pred, const IntArray& gt) { return fg_ari(flat_labels(pred), flat_labels(gt)); },
      py::arg("pred"), py::arg("gt"));
  m.def(
      "miou",
      [](const IntArray& pred, const IntArray& gt, bool fg_only) {
        return miou_hungarian(flat_labels(pred), flat_labels(gt), {fg_only, 0});
      },
      py::arg("pred"), py::arg("gt"), py::arg("fg_only") = false);
  m.def(
      "hungarian",
      [](const Eigen::MatrixXd& cost) {
        const Assignment a = hungarian(cost);
        return py::make_tuple(a.matching, a.total_cost);
      },
      py::arg("cost"));
  m.def(
      "postprocess",
      [](const IntArray& labels, int k_keep, double min_area_frac) {
        const py::buffer_info b = labels.request();
        require_ndim(b, 2, "labels");
        const Lattice lattice(static_cast<int>(b.shape[0]), static_cast<int>(b.shape[1]));
        std::vector<int> flat = flat_labels(labels);
        const int k = flat.empty() ? 1 : *std::max_element(flat.begin(), flat.end()) + 1;
        const HardMaskStack out =
            postprocess_connected_components(HardMaskStack(k, std::move(flat)), lattice, k_keep, min_area_frac);
        return from_labels(out.labels(), lattice.height(), lattice.width());
      },
      py::arg("labels"), py::arg("k_keep"), py::arg("min_area_frac") = 0.001);

  m.def(
      "run_cli",
      [](std::vector<std::string> args) {
        args.insert(args.begin(), "motionseg");
        std::ostringstream out, err;
        int code = 0;
        {
          py::gil_scoped_release release;
          code = cli::run(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs the command line in-process; returns (exit_code, stdout, stderr).");
}
