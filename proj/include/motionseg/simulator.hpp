#pragma once

#include "motionseg/core.hpp"
#include "motionseg/errors.hpp"
#include "motionseg/random.hpp"
#include "motionseg/warp.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace motionseg {

class GenerationError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

enum class ShapeKind { Disc, Rectangle, Polygon };

struct Appearance {
  std::array<double, 3> color{0.5, 0.5, 0.5};
  std::array<double, 3> alt_color{0.5, 0.5, 0.5};
  int checker_period = 0;  // 0 disables the checker pattern
  double noise_amplitude = 0.0;
  std::uint64_t noise_seed = 0;
};

struct ObjectSpec {
  ShapeKind shape = ShapeKind::Disc;
  double cx = 0.0, cy = 0.0;  // frame-0 center
  double radius = 0.0;        // discs
  std::vector<std::array<double, 2>> vertices;  // rectangles and polygons, frame 0, counter-clockwise
  Appearance appearance;
  Eigen::Matrix<double, 6, 1> theta;  // per-step affine map in lattice coordinates
  int depth = 1;
  bool is_static = false;
  double perspective = 0.0;  // quadratic flow term, zero unless violation is enabled

  bool contains(double x, double y) const;
};

enum class MotionScenario {
  Bernoulli,  // each object static with probability p_static
  Mixture,    // one object, two objects, or all objects move, equally likely
};

struct SceneSpec {
  int height = 64;
  int width = 64;
  int min_objects = 3;
  int max_objects = 6;
  double p_static = 0.5;
  MotionScenario scenario = MotionScenario::Bernoulli;
  bool camera_motion = false;
  Eigen::Matrix<double, 6, 6> theta_cov;  // around the no-motion point, object-centered
  double rotation_std = 0.0;              // extra rotation angle (radians) per step
  double camera_scale = 0.25;             // camera parameters use theta_cov * camera_scale
  double min_motion = 1.0;                // mean displacement of a moving object, px
  double min_visible_pixels = 20.0;
  bool perspective_violation = false;
  double perspective_strength = 0.02;
  int frames = 2;
  std::uint64_t seed = 0;
  double flow_noise_sigma = 0.0;

  SceneSpec();
  void validate() const;
};

struct SequenceManifest {
  int version = 1;
  int width = 0;
  int height = 0;
  int frames = 0;
  int k_true = 1;
  std::uint64_t seed = 0;
  double flow_noise_sigma = 0.0;

  bool operator==(const SequenceManifest&) const = default;
};

struct SequenceRecord {
  SequenceManifest manifest;
  int height = 0;
  int width = 0;
  std::vector<std::vector<std::uint8_t>> frames;  // interleaved RGB
  std::vector<FlowField> forward;                 // t -> t+1
  std::vector<FlowField> backward;                // t+1 -> t
  std::vector<HardMaskStack> masks;               // 0 = background
  std::vector<ObjectSpec> objects;                // generation metadata, not serialized
  Eigen::Matrix<double, 6, 1> camera_theta;

  Lattice lattice() const { return Lattice(height, width); }
  Frame frame(int t) const;
  // Everything that is serialized compares bit for bit.
  bool same_data(const SequenceRecord& other) const;
};

// A fully specified scene; generate_sequence samples one from a SceneSpec.
struct SceneLayout {
  int height = 64;
  int width = 64;
  int frames = 2;
  Appearance background;
  Eigen::Matrix<double, 6, 1> camera_theta = (Eigen::Matrix<double, 6, 1>() << 1, 0, 0, 0, 1, 0).finished();
  std::vector<ObjectSpec> objects;  // label k + 1 for objects[k]
};

// Renders frames, masks and exact flows by depth compositing, then applies
// optional flow noise and rounds flows to float32.
SequenceRecord render_sequence(const SceneLayout& layout, std::uint64_t seed = 0,
                               double flow_noise_sigma = 0.0);

SequenceRecord generate_sequence(const SceneSpec& spec);

FlowField add_flow_noise(const FlowField& flow, double sigma, CounterRng& rng);

// Rounds every component to the nearest float32, the on-disk precision.
FlowField to_float32_precision(const FlowField& flow);

void write_sequence(const SequenceRecord& record, const std::filesystem::path& dir);
SequenceRecord read_sequence(const std::filesystem::path& dir);

// Manifest alone, for tools that only need the dimensions.
SequenceManifest read_manifest(const std::filesystem::path& dir);

std::string frame_file(int t);
std::string flow_file(int t);
std::string bflow_file(int t);
std::string mask_file(int t);

void write_mask(const HardMaskStack& masks, const std::filesystem::path& file);
HardMaskStack read_mask(const std::filesystem::path& file, const Lattice& lattice, int k = 256);

}  // namespace motionseg
