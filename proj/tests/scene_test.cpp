#include "activebc/scene.hpp"

#include <gtest/gtest.h>

using namespace activebc;

namespace {

// Independent double-precision visibility count for the default camera.
double visibility_oracle(const PlantModel& plant, const CameraPose& pose) {
  const CameraIntrinsics intr;
  const double f = 32.0 / std::tan(intr.hfov / 2);
  int inside = 0;
  for (const auto& s : plant.spheres) {
    const Eigen::Vector3d w(s.center[0], s.center[1], s.center[2]);
    const Eigen::Vector3d c = pose.orientation.transpose() * (w - pose.position);
    if (c.x() < intr.near_plane) continue;
    const double u = 32.0 - f * c.y() / c.x();
    const double v = 32.0 - f * c.z() / c.x();
    const long col = std::lround(u), row = std::lround(v);
    if (col >= 0 && col < 64 && row >= 0 && row < 64) ++inside;
  }
  return static_cast<double>(inside) / static_cast<double>(plant.spheres.size());
}

PlantModel shifted_to(PlantModel plant, const Eigen::Vector3d& target) {
  for (auto& s : plant.spheres)
    for (int d = 0; d < 3; ++d)
      s.center[d] = static_cast<float>(s.center[d] - plant.anchor[d] + target(d));
  for (int d = 0; d < 3; ++d) plant.anchor[d] = target(d);
  return plant;
}

TEST(TrainingScene, LeftAndRightAzimuthBands) {
  const SceneSpec l = make_training_scene(Side::left, 7);
  EXPECT_GE(l.plant_azimuth, 0.52);
  EXPECT_LE(l.plant_azimuth, 0.58);
  EXPECT_EQ(l.side_label, Side::left);
  const SceneSpec r = make_training_scene(Side::right, 7);
  EXPECT_GE(r.plant_azimuth, -0.58);
  EXPECT_LE(r.plant_azimuth, -0.52);
  EXPECT_EQ(r.side_label, Side::right);
}

TEST(TrainingScene, Deterministic) {
  EXPECT_EQ(make_training_scene(Side::left, 11), make_training_scene(Side::left, 11));
  EXPECT_NE(make_training_scene(Side::left, 11), make_training_scene(Side::left, 12));
}

TEST(TrainingScene, PartiallyVisibleAtHomeForManySeeds) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    for (Side side : {Side::left, Side::right}) {
      const SceneSpec s = make_training_scene(side, seed);
      ASSERT_NO_THROW(validate(s));
      EXPECT_GE(s.plant_range, 0.33);
      EXPECT_LE(s.plant_range, 0.37);
      const double v =
          visibility_oracle(grow_plant(s), forward_kinematics({}, home_config()));
      EXPECT_GE(v, 0.05) << "seed " << seed;
      EXPECT_LE(v, 0.90) << "seed " << seed;
      EXPECT_DOUBLE_EQ(home_visibility(s), v);
    }
  }
}

TEST(TrainingScene, RejectsIntermediateSide) {
  EXPECT_THROW(make_training_scene(Side::intermediate, 1), std::invalid_argument);
}

TEST(IntermediateScene, AzimuthBand) {
  const SceneSpec s = make_intermediate_scene(0.30, 1);
  EXPECT_NEAR(s.plant_azimuth, 0.30, 0.03 + 1e-12);
  EXPECT_EQ(s.side_label, Side::intermediate);
  const SceneSpec n = make_intermediate_scene(-0.30, 1);
  EXPECT_NEAR(n.plant_azimuth, -0.30, 0.03 + 1e-12);
}

TEST(IntermediateScene, RejectsOutsideBand) {
  EXPECT_THROW(make_intermediate_scene(0.0, 1), std::invalid_argument);
  EXPECT_THROW(make_intermediate_scene(0.55, 1), std::invalid_argument);
  EXPECT_THROW(make_intermediate_scene(0.05, 1), std::invalid_argument);
}

TEST(GrowPlant, DeterministicInSeed) {
  SceneSpec s = make_training_scene(Side::right, 3);
  s.seed = 42;
  EXPECT_EQ(grow_plant(s), grow_plant(s));
}

TEST(GrowPlant, Invariants) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const SceneSpec s = make_training_scene(seed % 2 ? Side::left : Side::right, seed);
    const PlantModel p = grow_plant(s);
    ASSERT_GE(p.spheres.size(), 20u);
    ASSERT_LE(p.spheres.size(), 40u);
    for (const auto& sp : p.spheres) {
      EXPECT_GE(sp.radius, 0.004f);
      EXPECT_LE(sp.radius, 0.02f);
      EXPECT_GT(sp.rgb[1], sp.rgb[0]);
      EXPECT_GT(sp.rgb[1], sp.rgb[2]);
      double d2 = 0;
      for (int d = 0; d < 3; ++d) d2 += std::pow(sp.center[d] - p.anchor[d], 2);
      EXPECT_LE(std::sqrt(d2), 0.12);
    }
  }
}

TEST(GrowPlant, RejectsInvalidSpec) {
  SceneSpec s;
  s.plant_azimuth = 0.0;
  EXPECT_THROW(grow_plant(s), std::invalid_argument);
  s.plant_azimuth = 0.3;
  s.plant_range = 0.6;
  EXPECT_THROW(grow_plant(s), std::invalid_argument);
}

TEST(Visibility, PlantBehindCameraIsInvisible) {
  const CameraPose home = forward_kinematics({}, home_config());
  const PlantModel p = shifted_to(grow_plant(make_training_scene(Side::left, 1)),
                                  home.position - Eigen::Vector3d(0.35, 0, 0));
  EXPECT_EQ(check_partial_visibility(p, home), 0.0);
}

TEST(Visibility, PlantOnOpticalAxisIsFullyVisible) {
  const CameraPose home = forward_kinematics({}, home_config());
  const PlantModel p = shifted_to(grow_plant(make_training_scene(Side::left, 1)),
                                  home.position + Eigen::Vector3d(0.35, 0, 0));
  EXPECT_EQ(visibility_oracle(p, home), 1.0);
  EXPECT_EQ(check_partial_visibility(p, home), 1.0);
  EXPECT_FALSE(is_partially_visible(1.0));
}

TEST(Visibility, EmptyPlant) {
  EXPECT_EQ(check_partial_visibility(PlantModel{}, forward_kinematics({}, home_config())), 0.0);
}

TEST(Side, StringRoundTrip) {
  for (Side s : {Side::left, Side::right, Side::intermediate})
    EXPECT_EQ(side_from_string(to_string(s)), s);
  EXPECT_THROW(side_from_string("up"), std::invalid_argument);
}

}  // namespace
