#pragma once

// Procedural plant-on-white-background world.
//
// Plant placement is expressed relative to the wrist camera at the home
// pose: plant_azimuth is the bearing seen from that camera (positive = left,
// which appears on the image's left side) and plant_range the horizontal
// distance from it.

#include "activebc/arm.hpp"
#include "activebc/camera.hpp"
#include "activebc/rng.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace activebc {

enum class Side { left, right, intermediate };

inline std::string_view to_string(Side s) {
  switch (s) {
    case Side::left: return "left";
    case Side::right: return "right";
    case Side::intermediate: return "intermediate";
  }
  return "?";
}

inline Side side_from_string(std::string_view s) {
  if (s == "left") return Side::left;
  if (s == "right") return Side::right;
  if (s == "intermediate") return Side::intermediate;
  throw std::invalid_argument("unknown side '" + std::string(s) + "'");
}

struct Sphere {
  std::array<float, 3> center{};
  float radius = 0.0f;
  std::array<std::uint8_t, 3> rgb{};
  friend bool operator==(const Sphere&, const Sphere&) = default;
};

struct PlantModel {
  std::vector<Sphere> spheres;
  std::array<double, 3> anchor{};  // canopy center, world frame
  std::uint64_t seed = 0;
  friend bool operator==(const PlantModel&, const PlantModel&) = default;
};

struct SceneSpec {
  double plant_azimuth = 0.0;
  double plant_range = 0.35;
  double plant_height = 0.05;  // world z of the canopy center
  std::uint64_t seed = 0;
  Side side_label = Side::left;
  friend bool operator==(const SceneSpec&, const SceneSpec&) = default;
};

namespace scene_params {
inline constexpr double kTrainingAzimuth = 0.55;
inline constexpr double kAzimuthJitter = 0.03;
inline constexpr double kTrainingRange = 0.35;
inline constexpr double kRangeJitter = 0.02;
inline constexpr double kPlantHeight = 0.05;
inline constexpr double kHeightJitter = 0.01;
inline constexpr double kMinAzimuth = 0.15;
inline constexpr double kMaxAzimuth = 0.70;
inline constexpr double kMaxIntermediateAzimuth = 0.50;
inline constexpr double kMinRange = 0.25;
inline constexpr double kMaxRange = 0.45;

inline constexpr int kMinSpheres = 20;
inline constexpr int kMaxSpheres = 40;
inline constexpr double kMinRadius = 0.004;
inline constexpr double kMaxRadius = 0.02;
inline constexpr double kMaxSpread = 0.12;

// Leaves sit on a flattened ring around the canopy center, between
// kInnerFraction and 1 of kCanopyRadius, with a little depth scatter.
inline constexpr double kCanopyRadius = 0.11;
inline constexpr double kInnerFraction = 0.55;
inline constexpr double kVerticalSquash = 0.6;
inline constexpr double kDepthScatter = 0.02;
inline constexpr double kLeafRadiusLo = 0.006;
inline constexpr double kLeafRadiusHi = 0.018;

inline constexpr double kMinVisible = 0.05;
inline constexpr double kMaxVisible = 0.90;
inline constexpr int kSceneAttempts = 64;
}  // namespace scene_params

inline void validate(const SceneSpec& s) {
  using namespace scene_params;
  const double a = std::abs(s.plant_azimuth);
  if (!(a >= kMinAzimuth - 1e-12 && a <= kMaxAzimuth + 1e-12))
    throw std::invalid_argument("plant azimuth outside [0.15, 0.70] rad");
  if (!(s.plant_range >= kMinRange && s.plant_range <= kMaxRange))
    throw std::invalid_argument("plant range outside [0.25, 0.45] m");
  if (!std::isfinite(s.plant_height)) throw std::invalid_argument("plant height not finite");
}

inline std::array<double, 3> plant_anchor(const SceneSpec& s, const ArmGeometry& geom = {}) {
  const CameraPose home = forward_kinematics(geom, home_config());
  return {home.position.x() + s.plant_range * std::cos(s.plant_azimuth),
          home.position.y() + s.plant_range * std::sin(s.plant_azimuth), s.plant_height};
}

inline PlantModel grow_plant(const SceneSpec& spec, const ArmGeometry& geom = {}) {
  using namespace scene_params;
  validate(spec);
  Rng rng(derive_seed(spec.seed, 0x91a47));
  PlantModel plant;
  plant.seed = spec.seed;
  plant.anchor = plant_anchor(spec, geom);

  // Local frame at the anchor: radial (away from the home camera), lateral, up.
  const double ca = std::cos(spec.plant_azimuth), sa = std::sin(spec.plant_azimuth);
  const std::array<double, 3> radial{ca, sa, 0.0}, lateral{-sa, ca, 0.0};

  const int count = static_cast<int>(rng.uniform_int(kMinSpheres, kMaxSpheres));
  plant.spheres.reserve(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) {
    const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double r = kCanopyRadius * rng.uniform(kInnerFraction, 1.0);
    const double lat = r * std::cos(theta);
    const double up = kVerticalSquash * r * std::sin(theta);
    const double depth = rng.uniform(-kDepthScatter, kDepthScatter);
    Sphere s;
    for (int d = 0; d < 3; ++d)
      s.center[d] = static_cast<float>(plant.anchor[d] + depth * radial[d] + lat * lateral[d] +
                                       (d == 2 ? up : 0.0));
    s.radius = static_cast<float>(rng.uniform(kLeafRadiusLo, kLeafRadiusHi));
    const auto g = rng.uniform_int(110, 210);
    const auto red = rng.uniform_int(20, g - 40);
    const auto blue = rng.uniform_int(10, g - 50);
    s.rgb = {static_cast<std::uint8_t>(red), static_cast<std::uint8_t>(g),
             static_cast<std::uint8_t>(blue)};
    plant.spheres.push_back(s);
  }
  return plant;
}

// Fraction of sphere centers that project inside the image.
inline double check_partial_visibility(const PlantModel& plant, const CameraPose& pose,
                                       const CameraIntrinsics& intr = {}) {
  if (plant.spheres.empty()) return 0.0;
  const CameraFrameF cam(pose);
  std::size_t inside = 0;
  for (const auto& s : plant.spheres) {
    const auto p = project_point(cam, intr, s.center.data());
    if (p && pixel_in_image(intr, round_px(p->u), round_px(p->v))) ++inside;
  }
  return static_cast<double>(inside) / static_cast<double>(plant.spheres.size());
}

inline bool is_partially_visible(double fraction) {
  return fraction >= scene_params::kMinVisible && fraction <= scene_params::kMaxVisible;
}

inline double home_visibility(const SceneSpec& spec, const ArmGeometry& geom = {},
                              const CameraIntrinsics& intr = {}) {
  return check_partial_visibility(grow_plant(spec, geom), forward_kinematics(geom, home_config()),
                                  intr);
}

namespace detail {

// Draws placement jitter from `seed`, then searches plant seeds until the
// partial-visibility band holds at the home pose.
inline SceneSpec place_scene(double nominal_azimuth, Side label, std::uint64_t seed,
                             bool require_visibility) {
  using namespace scene_params;
  Rng rng(derive_seed(seed, 0x5ce4e));
  SceneSpec spec;
  const double jittered = nominal_azimuth + rng.uniform(-kAzimuthJitter, kAzimuthJitter);
  spec.plant_azimuth = std::copysign(std::clamp(std::abs(jittered), kMinAzimuth, kMaxAzimuth),
                                     nominal_azimuth);
  spec.plant_range = kTrainingRange + rng.uniform(-kRangeJitter, kRangeJitter);
  spec.plant_height = kPlantHeight + rng.uniform(-kHeightJitter, kHeightJitter);
  spec.side_label = label;
  spec.seed = seed;
  if (!require_visibility) return spec;
  for (int attempt = 0; attempt < kSceneAttempts; ++attempt) {
    spec.seed = attempt == 0 ? seed : derive_seed(seed, 0x1000 + attempt);
    if (is_partially_visible(home_visibility(spec))) return spec;
  }
  throw std::runtime_error("no plant seed satisfies partial visibility");
}

}  // namespace detail

inline SceneSpec make_training_scene(Side side, std::uint64_t seed) {
  if (side == Side::intermediate)
    throw std::invalid_argument("training scenes are left or right");
  const double az = side == Side::left ? scene_params::kTrainingAzimuth
                                       : -scene_params::kTrainingAzimuth;
  return detail::place_scene(az, side, seed, true);
}

// The caller checks partial visibility (see check_partial_visibility).
inline SceneSpec make_intermediate_scene(double azimuth, std::uint64_t seed) {
  const double a = std::abs(azimuth);
  if (!(a >= scene_params::kMinAzimuth && a <= scene_params::kMaxIntermediateAzimuth))
    throw std::invalid_argument("intermediate azimuth must satisfy 0.15 <= |azimuth| <= 0.50");
  return detail::place_scene(azimuth, Side::intermediate, seed, false);
}

}  // namespace activebc
