#include "motionseg/simulator.hpp"

#include "motionseg/motion_model.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>

namespace motionseg {

namespace fs = std::filesystem;
using Theta6 = Eigen::Matrix<double, 6, 1>;

namespace {

Theta6 identity_theta() {
  Theta6 t;
  t << 1, 0, 0, 0, 1, 0;
  return t;
}

Eigen::Matrix3d to_matrix(const Theta6& t) {
  Eigen::Matrix3d m;
  m << t[0], t[1], t[2], t[3], t[4], t[5], 0, 0, 1;
  return m;
}

std::array<double, 2> map_point(const Eigen::Matrix3d& m, double x, double y) {
  return {m(0, 0) * x + m(0, 1) * y + m(0, 2), m(1, 0) * x + m(1, 1) * y + m(1, 2)};
}

Theta6 default_theta_cov() {
  return default_prior(MotionModelKind::Affine).cov.diagonal();
}

}  // namespace

SceneSpec::SceneSpec() : theta_cov(default_theta_cov().asDiagonal()) {}

void SceneSpec::validate() const {
  (void)Lattice(height, width);
  if (min_objects < 1 || max_objects > 10 || min_objects > max_objects) {
    throw InvalidArgument("object count range must satisfy 1 <= min <= max <= 10");
  }
  if (!(p_static >= 0.0 && p_static <= 1.0)) throw InvalidArgument("p_static must lie in [0, 1]");
  if (frames < 2) throw InvalidArgument("a sequence needs at least 2 frames");
  if (!(flow_noise_sigma >= 0.0)) throw InvalidArgument("flow noise sigma must be non-negative");
  if (!(rotation_std >= 0.0) || !(min_motion >= 0.0)) throw InvalidArgument("motion parameters must be non-negative");
  if ((theta_cov - theta_cov.transpose()).cwiseAbs().maxCoeff() > 1e-12 ||
      theta_cov.llt().info() != Eigen::Success) {
    throw InvalidArgument("theta covariance must be symmetric positive definite");
  }
}

bool ObjectSpec::contains(double x, double y) const {
  if (shape == ShapeKind::Disc) {
    const double dx = x - cx, dy = y - cy;
    return dx * dx + dy * dy <= radius * radius;
  }
  const size_t m = vertices.size();
  for (size_t i = 0; i < m; ++i) {
    const auto& a = vertices[i];
    const auto& b = vertices[(i + 1) % m];
    if ((b[0] - a[0]) * (y - a[1]) - (b[1] - a[1]) * (x - a[0]) < 0.0) return false;
  }
  return true;
}

Frame SequenceRecord::frame(int t) const {
  return Frame::from_rgb8(frames.at(static_cast<size_t>(t)), lattice());
}

bool SequenceRecord::same_data(const SequenceRecord& other) const {
  if (!(manifest == other.manifest) || height != other.height || width != other.width) return false;
  if (frames != other.frames || masks.size() != other.masks.size()) return false;
  for (size_t t = 0; t < masks.size(); ++t)
    if (!(masks[t] == other.masks[t])) return false;
  auto same_flows = [](const std::vector<FlowField>& a, const std::vector<FlowField>& b) {
    if (a.size() != b.size()) return false;
    for (size_t t = 0; t < a.size(); ++t)
      if (a[t].u != b[t].u || a[t].v != b[t].v) return false;
    return true;
  };
  return same_flows(forward, other.forward) && same_flows(backward, other.backward);
}

namespace {

Appearance sample_appearance(CounterRng& rng) {
  Appearance a;
  for (int c = 0; c < 3; ++c) {
    a.color[static_cast<size_t>(c)] = rng.uniform(0.1, 0.9);
    a.alt_color[static_cast<size_t>(c)] = std::clamp(a.color[static_cast<size_t>(c)] + rng.uniform(-0.3, 0.3), 0.0, 1.0);
  }
  a.checker_period = rng.uniform() < 0.5 ? 0 : rng.uniform_int(3, 8);
  a.noise_amplitude = rng.uniform(0.0, 0.08);
  a.noise_seed = rng.next_u64();
  return a;
}

std::array<double, 3> shade(const Appearance& a, double sx, double sy) {
  std::array<double, 3> c = a.color;
  if (a.checker_period > 0) {
    const auto p = static_cast<double>(a.checker_period);
    const auto cell = static_cast<long long>(std::floor(sx / p)) + static_cast<long long>(std::floor(sy / p));
    if ((cell & 1LL) != 0) c = a.alt_color;
  }
  if (a.noise_amplitude > 0.0) {
    const auto ix = static_cast<std::uint64_t>(static_cast<long long>(std::floor(sx)));
    const auto iy = static_cast<std::uint64_t>(static_cast<long long>(std::floor(sy)));
    const std::uint64_t h = CounterRng::mix(a.noise_seed ^ CounterRng::mix(ix * 0x9E3779B97F4A7C15ULL + iy));
    const double r = static_cast<double>(h >> 11) * 0x1.0p-53 * 2.0 - 1.0;
    for (double& v : c) v += a.noise_amplitude * r;
  }
  return c;
}

ObjectSpec sample_shape(CounterRng& rng, int height, int width) {
  ObjectSpec o;
  const double size = std::max(3.0, rng.uniform(0.08, 0.18) * std::min(height, width));
  const int kind = rng.uniform_int(0, 2);
  o.shape = static_cast<ShapeKind>(kind);
  const double lo_x = size, hi_x = width - 1 - size;
  const double lo_y = size, hi_y = height - 1 - size;
  o.cx = hi_x > lo_x ? rng.uniform(lo_x, hi_x) : 0.5 * (width - 1);
  o.cy = hi_y > lo_y ? rng.uniform(lo_y, hi_y) : 0.5 * (height - 1);
  if (o.shape == ShapeKind::Disc) {
    o.radius = size;
  } else if (o.shape == ShapeKind::Rectangle) {
    const double hw = size * rng.uniform(0.6, 1.0);
    const double hh = size * rng.uniform(0.6, 1.0);
    const double angle = rng.uniform(0.0, 3.141592653589793);
    const double c = std::cos(angle), s = std::sin(angle);
    const double corners[4][2] = {{-hw, -hh}, {hw, -hh}, {hw, hh}, {-hw, hh}};
    for (const auto& k : corners) o.vertices.push_back({o.cx + c * k[0] - s * k[1], o.cy + s * k[0] + c * k[1]});
  } else {
    const int m = rng.uniform_int(5, 7);
    std::vector<double> angles(static_cast<size_t>(m));
    for (auto& a : angles) a = rng.uniform(0.0, 6.283185307179586);
    std::sort(angles.begin(), angles.end());
    for (double a : angles) {
      const double r = size * rng.uniform(0.75, 1.0);
      o.vertices.push_back({o.cx + r * std::cos(a), o.cy + r * std::sin(a)});
    }
  }
  return o;
}

// Only convex vertex sets are valid; random radii can break convexity.
bool is_convex(const ObjectSpec& o) {
  if (o.shape == ShapeKind::Disc) return true;
  const size_t m = o.vertices.size();
  for (size_t i = 0; i < m; ++i) {
    const auto& a = o.vertices[i];
    const auto& b = o.vertices[(i + 1) % m];
    const auto& c = o.vertices[(i + 2) % m];
    if ((b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0]) <= 0.0) return false;
  }
  return true;
}

std::vector<Index> support(const ObjectSpec& o, const Lattice& lattice) {
  std::vector<Index> out;
  for (Index i = 0; i < lattice.size(); ++i)
    if (o.contains(lattice.x(i), lattice.y(i))) out.push_back(i);
  return out;
}

Theta6 sample_motion(CounterRng& rng, const Eigen::Matrix<double, 6, 6>& chol, double rotation_std,
                     double cx, double cy) {
  Theta6 z;
  for (int i = 0; i < 6; ++i) z[i] = rng.normal();
  const Theta6 d = chol * z;
  Eigen::Matrix2d a;
  a << 1.0 + d[0], d[1], d[3], 1.0 + d[4];
  if (rotation_std > 0.0) {
    const double phi = rotation_std * rng.normal();
    Eigen::Matrix2d r;
    r << std::cos(phi), -std::sin(phi), std::sin(phi), std::cos(phi);
    a = r * a;
  }
  const Eigen::Vector2d c(cx, cy);
  const Eigen::Vector2d b = c + Eigen::Vector2d(d[2], d[5]) - a * c;
  Theta6 t;
  t << a(0, 0), a(0, 1), b[0], a(1, 0), a(1, 1), b[1];
  return t;
}

struct MotionStats {
  double mean = 0.0;
  double max = 0.0;
};

MotionStats displacement(const Theta6& theta, const std::vector<Index>& pixels, const Lattice& lattice) {
  MotionStats s;
  const Eigen::Matrix3d m = to_matrix(theta);
  for (Index i : pixels) {
    const auto p = map_point(m, lattice.x(i), lattice.y(i));
    const double d = std::hypot(p[0] - lattice.x(i), p[1] - lattice.y(i));
    s.mean += d;
    s.max = std::max(s.max, d);
  }
  if (!pixels.empty()) s.mean /= static_cast<double>(pixels.size());
  return s;
}

std::vector<bool> choose_moving(CounterRng& rng, const SceneSpec& spec, int count) {
  std::vector<bool> moving(static_cast<size_t>(count), false);
  if (spec.scenario == MotionScenario::Bernoulli) {
    for (auto&& m : moving) m = rng.uniform() >= spec.p_static;
    return moving;
  }
  const int scenario = rng.uniform_int(0, 2);
  if (scenario == 2) {
    std::fill(moving.begin(), moving.end(), true);
    return moving;
  }
  std::vector<int> order(static_cast<size_t>(count));
  std::iota(order.begin(), order.end(), 0);
  for (int i = count - 1; i > 0; --i) std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(rng.uniform_int(0, i))]);
  const int movers = std::min(count, scenario + 1);
  for (int i = 0; i < movers; ++i) moving[static_cast<size_t>(order[static_cast<size_t>(i)])] = true;
  return moving;
}

struct Layer {
  const ObjectSpec* object;  // nullptr for the background
  int label;
  int depth;
  Eigen::Matrix3d step;      // screen map per frame step
  Eigen::Matrix3d step_inv;
  std::vector<Eigen::Matrix3d> to_source;  // frame t -> frame 0
  std::vector<Eigen::Matrix3d> to_frame;   // frame 0 -> frame t
};

std::array<double, 2> perspective_term(const ObjectSpec& o, const Layer& layer, int t, double x,
                                       double y, double scale) {
  const auto c = map_point(layer.to_frame[static_cast<size_t>(t)], o.cx, o.cy);
  const double dx = x - c[0], dy = y - c[1];
  return {o.perspective * (dx * dx - dy * dy) / scale, o.perspective * 2.0 * dx * dy / scale};
}

}  // namespace

FlowField to_float32_precision(const FlowField& flow) {
  FlowField out = flow;
  for (Index i = 0; i < out.size(); ++i) {
    out.u[i] = static_cast<double>(static_cast<float>(out.u[i]));
    out.v[i] = static_cast<double>(static_cast<float>(out.v[i]));
  }
  return out;
}

FlowField add_flow_noise(const FlowField& flow, double sigma, CounterRng& rng) {
  if (!(sigma >= 0.0)) throw InvalidArgument("noise sigma must be non-negative");
  if (sigma == 0.0) return flow;
  FlowField out = flow;
  for (Index i = 0; i < out.size(); ++i) out.u[i] += sigma * rng.normal();
  for (Index i = 0; i < out.size(); ++i) out.v[i] += sigma * rng.normal();
  return out;
}

SequenceRecord render_sequence(const SceneLayout& layout, std::uint64_t seed, double flow_noise_sigma) {
  if (layout.frames < 2) throw InvalidArgument("a sequence needs at least 2 frames");
  if (layout.objects.size() > 255) throw InvalidArgument("too many objects");
  if (!(flow_noise_sigma >= 0.0)) throw InvalidArgument("flow noise sigma must be non-negative");
  const Lattice lattice(layout.height, layout.width);
  const int count = static_cast<int>(layout.objects.size());
  SequenceRecord rec;
  rec.height = layout.height;
  rec.width = layout.width;
  rec.objects = layout.objects;
  rec.camera_theta = layout.camera_theta;

  // Layers, nearest first; the background is last.
  const Eigen::Matrix3d camera = to_matrix(layout.camera_theta);
  std::vector<Layer> layers;
  for (int k = 0; k < count; ++k) {
    const ObjectSpec& o = rec.objects[static_cast<size_t>(k)];
    layers.push_back({&o, k + 1, o.depth, camera * to_matrix(o.theta), {}, {}, {}});
  }
  std::stable_sort(layers.begin(), layers.end(), [](const Layer& a, const Layer& b) { return a.depth > b.depth; });
  layers.push_back({nullptr, 0, 0, camera, {}, {}, {}});
  const int frames = layout.frames;
  for (Layer& l : layers) {
    l.step_inv = l.step.inverse();
    Eigen::Matrix3d fwd = Eigen::Matrix3d::Identity(), inv = Eigen::Matrix3d::Identity();
    for (int t = 0; t < frames; ++t) {
      l.to_frame.push_back(fwd);
      l.to_source.push_back(inv);
      fwd = l.step * fwd;
      inv = inv * l.step_inv;
    }
  }

  // Ownership and colors per frame.
  const Index n = lattice.size();
  std::vector<std::vector<int>> owner(static_cast<size_t>(frames), std::vector<int>(static_cast<size_t>(n)));
  for (int t = 0; t < frames; ++t) {
    std::vector<std::uint8_t> rgb(static_cast<size_t>(3 * n));
    std::vector<int> labels(static_cast<size_t>(n));
    for (Index i = 0; i < n; ++i) {
      const double x = lattice.x(i), y = lattice.y(i);
      for (size_t li = 0; li < layers.size(); ++li) {
        const Layer& l = layers[li];
        const auto src = map_point(l.to_source[static_cast<size_t>(t)], x, y);
        if (l.object != nullptr && !l.object->contains(src[0], src[1])) continue;
        owner[static_cast<size_t>(t)][static_cast<size_t>(i)] = static_cast<int>(li);
        labels[static_cast<size_t>(i)] = l.label;
        const auto c = shade(l.object != nullptr ? l.object->appearance : layout.background, src[0], src[1]);
        for (int ch = 0; ch < 3; ++ch) {
          const double v = std::clamp(c[static_cast<size_t>(ch)], 0.0, 1.0);
          rgb[static_cast<size_t>(3 * i + ch)] = static_cast<std::uint8_t>(std::lround(v * 255.0));
        }
        break;
      }
    }
    rec.frames.push_back(std::move(rgb));
    rec.masks.emplace_back(count + 1, std::move(labels));
  }

  const double scale = static_cast<double>(std::max(layout.height, layout.width));
  for (int t = 0; t + 1 < frames; ++t) {
    FlowField fwd = FlowField::zeros(n), bwd = FlowField::zeros(n);
    for (Index i = 0; i < n; ++i) {
      const double x = lattice.x(i), y = lattice.y(i);
      const Layer& lf = layers[static_cast<size_t>(owner[static_cast<size_t>(t)][static_cast<size_t>(i)])];
      const auto pf = map_point(lf.step, x, y);
      fwd.u[i] = pf[0] - x;
      fwd.v[i] = pf[1] - y;
      if (lf.object != nullptr && lf.object->perspective != 0.0) {
        const auto q = perspective_term(*lf.object, lf, t, x, y, scale);
        fwd.u[i] += q[0];
        fwd.v[i] += q[1];
      }
      const Layer& lb = layers[static_cast<size_t>(owner[static_cast<size_t>(t + 1)][static_cast<size_t>(i)])];
      const auto pb = map_point(lb.step_inv, x, y);
      bwd.u[i] = pb[0] - x;
      bwd.v[i] = pb[1] - y;
      if (lb.object != nullptr && lb.object->perspective != 0.0) {
        const auto q = perspective_term(*lb.object, lb, t + 1, x, y, scale);
        bwd.u[i] -= q[0];
        bwd.v[i] -= q[1];
      }
    }
    rec.forward.push_back(std::move(fwd));
    rec.backward.push_back(std::move(bwd));
  }

  if (flow_noise_sigma > 0.0) {
    CounterRng noise(CounterRng::derive(seed, 0x6E6F697365ULL));
    for (auto& f : rec.forward) f = add_flow_noise(f, flow_noise_sigma, noise);
    for (auto& f : rec.backward) f = add_flow_noise(f, flow_noise_sigma, noise);
  }
  for (auto& f : rec.forward) f = to_float32_precision(f);
  for (auto& f : rec.backward) f = to_float32_precision(f);

  rec.manifest.width = layout.width;
  rec.manifest.height = layout.height;
  rec.manifest.frames = frames;
  rec.manifest.k_true = count + 1;
  rec.manifest.seed = seed;
  rec.manifest.flow_noise_sigma = flow_noise_sigma;
  return rec;
}

SequenceRecord generate_sequence(const SceneSpec& spec) {
  spec.validate();
  const Lattice lattice(spec.height, spec.width);
  CounterRng rng(spec.seed);
  const Eigen::Matrix<double, 6, 6> chol = spec.theta_cov.llt().matrixL();
  const double diagonal = std::hypot(spec.height, spec.width);
  const double center_x = 0.5 * (spec.width - 1), center_y = 0.5 * (spec.height - 1);

  SceneLayout layout;
  layout.height = spec.height;
  layout.width = spec.width;
  layout.frames = spec.frames;
  layout.camera_theta = identity_theta();
  if (spec.camera_motion) {
    const Eigen::Matrix<double, 6, 6> cam_chol = std::sqrt(spec.camera_scale) * chol;
    layout.camera_theta = sample_motion(rng, cam_chol, 0.0, center_x, center_y);
  }
  layout.background = sample_appearance(rng);
  auto& objects = layout.objects;
  const int count = rng.uniform_int(spec.min_objects, spec.max_objects);

  constexpr int kLayoutAttempts = 50;
  constexpr int kAttempts = 200;
  bool placed = false;
  for (int layout = 0; layout < kLayoutAttempts && !placed; ++layout) {
    objects.clear();
    std::vector<int> depths(static_cast<size_t>(count));
    std::iota(depths.begin(), depths.end(), 1);
    for (int i = count - 1; i > 0; --i) std::swap(depths[static_cast<size_t>(i)], depths[static_cast<size_t>(rng.uniform_int(0, i))]);
    for (int i = 0; i < count; ++i) {
      ObjectSpec o;
      int attempt = 0;
      do {
        o = sample_shape(rng, spec.height, spec.width);
      } while (!is_convex(o) && ++attempt < kAttempts);
      if (!is_convex(o)) throw GenerationError("could not sample a convex shape");
      o.appearance = sample_appearance(rng);
      o.depth = depths[static_cast<size_t>(i)];
      objects.push_back(std::move(o));
    }
    // Visibility at frame 0 after occlusion.
    std::vector<Index> visible(static_cast<size_t>(count), 0);
    for (Index i = 0; i < lattice.size(); ++i) {
      int owner = -1, best = 0;
      for (int k = 0; k < count; ++k) {
        const ObjectSpec& o = objects[static_cast<size_t>(k)];
        if (o.depth > best && o.contains(lattice.x(i), lattice.y(i))) {
          owner = k;
          best = o.depth;
        }
      }
      if (owner >= 0) ++visible[static_cast<size_t>(owner)];
    }
    placed = std::all_of(visible.begin(), visible.end(),
                         [&](Index v) { return static_cast<double>(v) >= spec.min_visible_pixels; });
  }
  if (!placed) throw GenerationError("object placement failed after bounded retries");

  const std::vector<bool> moving = choose_moving(rng, spec, count);
  for (int k = 0; k < count; ++k) {
    ObjectSpec& o = objects[static_cast<size_t>(k)];
    o.is_static = !moving[static_cast<size_t>(k)];
    o.theta = identity_theta();
    if (o.is_static) continue;
    const std::vector<Index> pixels = support(o, lattice);
    bool ok = false;
    for (int attempt = 0; attempt < kAttempts && !ok; ++attempt) {
      o.theta = sample_motion(rng, chol, spec.rotation_std, o.cx, o.cy);
      const MotionStats s = displacement(o.theta, pixels, lattice);
      ok = s.mean >= spec.min_motion && s.max <= 0.5 * diagonal && o.theta != identity_theta();
    }
    if (!ok) throw GenerationError("could not sample a motion satisfying the displacement bounds");
    if (spec.perspective_violation) {
      o.perspective = spec.perspective_strength * (rng.uniform() < 0.5 ? -1.0 : 1.0);
    }
  }

  return render_sequence(layout, spec.seed, spec.flow_noise_sigma);
}

// ---------------------------------------------------------------------------
// Sequence directory I/O

namespace {

static_assert(std::endian::native == std::endian::little, "raster I/O assumes a little-endian host");

std::string numbered(const char* stem, int t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%04d.bin", stem, t);
  return buf;
}

void write_bytes(const fs::path& file, const void* data, size_t size) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(file.string() + ": cannot open for writing");
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
  if (!out) throw FormatError(file.string() + ": write failed");
}

std::vector<char> read_bytes(const fs::path& file, size_t expected) {
  if (!fs::exists(file)) throw FormatError(file.string() + ": missing file");
  std::ifstream in(file, std::ios::binary);
  if (!in) throw FormatError(file.string() + ": cannot open");
  std::vector<char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (data.size() != expected) {
    throw FormatError(file.string() + ": size mismatch, expected " + std::to_string(expected) +
                      " bytes for the declared dimensions, found " + std::to_string(data.size()));
  }
  return data;
}

void write_flow(const FlowField& flow, const fs::path& file) {
  const Index n = flow.size();
  std::vector<float> buf(static_cast<size_t>(2 * n));
  for (Index i = 0; i < n; ++i) {
    buf[static_cast<size_t>(i)] = static_cast<float>(flow.u[i]);
    buf[static_cast<size_t>(n + i)] = static_cast<float>(flow.v[i]);
  }
  write_bytes(file, buf.data(), buf.size() * sizeof(float));
}

FlowField read_flow(const fs::path& file, Index n) {
  const std::vector<char> data = read_bytes(file, static_cast<size_t>(2 * n) * sizeof(float));
  std::vector<float> buf(static_cast<size_t>(2 * n));
  std::memcpy(buf.data(), data.data(), data.size());
  FlowField flow = FlowField::zeros(n);
  for (Index i = 0; i < n; ++i) {
    flow.u[i] = buf[static_cast<size_t>(i)];
    flow.v[i] = buf[static_cast<size_t>(n + i)];
    if (!std::isfinite(flow.u[i]) || !std::isfinite(flow.v[i])) {
      throw FormatError(file.string() + ": non-finite flow value");
    }
  }
  return flow;
}

}  // namespace

std::string frame_file(int t) { return numbered("frame", t); }
std::string flow_file(int t) { return numbered("flow", t); }
std::string bflow_file(int t) { return numbered("bflow", t); }
std::string mask_file(int t) { return numbered("mask", t); }

void write_mask(const HardMaskStack& masks, const fs::path& file) {
  std::vector<std::uint8_t> buf(masks.labels().size());
  for (size_t i = 0; i < buf.size(); ++i) {
    const int l = masks.labels()[i];
    if (l < 0 || l > 255) throw InvalidArgument("mask labels must fit in 8 bits");
    buf[i] = static_cast<std::uint8_t>(l);
  }
  write_bytes(file, buf.data(), buf.size());
}

HardMaskStack read_mask(const fs::path& file, const Lattice& lattice, int k) {
  const std::vector<char> data = read_bytes(file, static_cast<size_t>(lattice.size()));
  std::vector<int> labels(data.size());
  for (size_t i = 0; i < data.size(); ++i) {
    labels[i] = static_cast<int>(static_cast<unsigned char>(data[i]));
    if (labels[i] >= k) throw FormatError(file.string() + ": label " + std::to_string(labels[i]) + " out of range");
  }
  return HardMaskStack(k, std::move(labels));
}

void write_sequence(const SequenceRecord& record, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw FormatError(dir.string() + ": cannot create directory");
  const SequenceManifest& m = record.manifest;
  nlohmann::json j = {{"version", m.version},   {"width", m.width}, {"height", m.height},
                      {"frames", m.frames},     {"k_true", m.k_true}, {"seed", m.seed},
                      {"flow_noise_sigma", m.flow_noise_sigma}};
  const std::string text = j.dump(2) + "\n";
  write_bytes(dir / "manifest.json", text.data(), text.size());
  for (size_t t = 0; t < record.frames.size(); ++t) {
    write_bytes(dir / frame_file(static_cast<int>(t)), record.frames[t].data(), record.frames[t].size());
  }
  for (size_t t = 0; t < record.forward.size(); ++t) write_flow(record.forward[t], dir / flow_file(static_cast<int>(t)));
  for (size_t t = 0; t < record.backward.size(); ++t) write_flow(record.backward[t], dir / bflow_file(static_cast<int>(t)));
  for (size_t t = 0; t < record.masks.size(); ++t) write_mask(record.masks[t], dir / mask_file(static_cast<int>(t)));
}

SequenceManifest read_manifest(const fs::path& dir) {
  const fs::path file = dir / "manifest.json";
  if (!fs::exists(file)) throw FormatError(file.string() + ": missing file");
  std::ifstream in(file);
  SequenceManifest m;
  try {
    const nlohmann::json j = nlohmann::json::parse(in);
    m.version = j.at("version").get<int>();
    m.width = j.at("width").get<int>();
    m.height = j.at("height").get<int>();
    m.frames = j.at("frames").get<int>();
    m.k_true = j.at("k_true").get<int>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.flow_noise_sigma = j.at("flow_noise_sigma").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(file.string() + ": malformed manifest (" + e.what() + ")");
  }
  if (m.version != 1) throw FormatError(file.string() + ": unsupported version");
  if (m.width < 1 || m.height < 1 || m.frames < 1 || m.k_true < 1 || m.k_true > 256) {
    throw FormatError(file.string() + ": invalid dimensions");
  }
  return m;
}

SequenceRecord read_sequence(const fs::path& dir) {
  SequenceRecord rec;
  rec.manifest = read_manifest(dir);
  rec.height = rec.manifest.height;
  rec.width = rec.manifest.width;
  rec.camera_theta = identity_theta();
  const Lattice lattice(rec.height, rec.width);
  const Index n = lattice.size();
  const int frames = rec.manifest.frames;
  for (int t = 0; t < frames; ++t) {
    const std::vector<char> data = read_bytes(dir / frame_file(t), static_cast<size_t>(3 * n));
    rec.frames.emplace_back(data.begin(), data.end());
    rec.masks.push_back(read_mask(dir / mask_file(t), lattice, rec.manifest.k_true));
  }
  for (int t = 0; t + 1 < frames; ++t) rec.forward.push_back(read_flow(dir / flow_file(t), n));
  // Backward flow is optional as a whole, but a partial set is malformed.
  int present = 0;
  for (int t = 0; t + 1 < frames; ++t) present += fs::exists(dir / bflow_file(t)) ? 1 : 0;
  if (present > 0) {
    for (int t = 0; t + 1 < frames; ++t) rec.backward.push_back(read_flow(dir / bflow_file(t), n));
  }
  return rec;
}

}  // namespace motionseg
