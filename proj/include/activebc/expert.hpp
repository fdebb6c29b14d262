#pragma once

// Scripted demonstrator. It reads the plant centroid straight from the
// renderer, steers yaw and wrist pitch proportionally toward the image
// center, waits while the plant stays centered, closes the gripper once it
// has been centered for a few frames, and then holds still.

#include "activebc/arm.hpp"
#include "activebc/episode.hpp"
#include "activebc/render.hpp"
#include "activebc/rng.hpp"
#include "activebc/scene.hpp"

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace activebc {

struct ExpertConfig {
  double gain = 0.004;          // rad per pixel of centroid error
  double noise_sigma = 0.005;   // rad, per arm joint per step
  double center_tol = 4.0;      // px
  int settle_frames = 5;
  int episode_len = 100;
  int max_lost_frames = 10;
  bool hold_when_centered = true;  // no command (and no noise) inside the tolerance

  void validate() const {
    if (!(gain > 0)) throw std::invalid_argument("expert gain must be positive");
    if (!(noise_sigma >= 0)) throw std::invalid_argument("expert noise must be non-negative");
    if (!(center_tol >= 1)) throw std::invalid_argument("center tolerance must be >= 1 px");
    if (settle_frames < 1) throw std::invalid_argument("settle_frames must be >= 1");
    if (episode_len < 30) throw std::invalid_argument("episode_len must be >= 30");
  }
};

// Runs the demonstrator against an explicit plant. `meta_scene` is stored in
// the episode metadata as-is.
inline Episode run_expert_on(const PlantModel& plant, const SceneSpec& meta_scene,
                             const ExpertConfig& cfg, std::uint64_t seed,
                             const ArmGeometry& geom = {}, const CameraIntrinsics& intr = {}) {
  cfg.validate();
  enum class Phase { approach, ramp, hold };
  Rng rng(derive_seed(seed, 0xe4e27));

  Episode ep;
  ep.meta.scene = meta_scene;
  ep.meta.expert_seed = seed;
  ep.meta.source = "expert";
  ep.frames.reserve(static_cast<std::size_t>(cfg.episode_len));
  ep.joints.reserve(static_cast<std::size_t>(cfg.episode_len));

  const double cx = intr.width * 0.5, cy = intr.height * 0.5;
  Phase phase = Phase::approach;
  int centered_run = 0;
  int lost_run = 0;
  JointConfig q = home_config();

  for (int t = 0; t < cfg.episode_len; ++t) {
    const CameraPose pose = forward_kinematics(geom, q);
    ep.frames.push_back(render(plant, pose, intr));
    ep.joints.push_back(q);
    if (t + 1 == cfg.episode_len) break;

    JointDelta dq;
    bool holding = false;
    if (phase == Phase::approach) {
      const auto c = plant_centroid_px(plant, pose, intr);
      if (!c) {
        if (++lost_run > cfg.max_lost_frames)
          throw ExpertFailure("expert lost the plant for more than " +
                              std::to_string(cfg.max_lost_frames) + " frames");
        centered_run = 0;
      } else {
        lost_run = 0;
        const double du = c->u - cx, dv = c->v - cy;
        centered_run = std::sqrt(du * du + dv * dv) <= cfg.center_tol ? centered_run + 1 : 0;
        if (centered_run >= cfg.settle_frames) {
          phase = Phase::ramp;
        } else if (centered_run > 0 && cfg.hold_when_centered) {
          holding = true;
        } else {
          // Plant left of center (du < 0) needs positive yaw; below center
          // (dv > 0) needs the camera pitched down, which is positive pitch.
          dq[0] = -cfg.gain * du;
          dq[3] = cfg.gain * dv;
        }
      }
      if (phase == Phase::approach && !holding && cfg.noise_sigma > 0)
        for (std::size_t j = 0; j < kGripper; ++j) dq[j] += rng.normal(0.0, cfg.noise_sigma);
    }
    if (phase == Phase::ramp) {
      dq[kGripper] = -std::min(kMaxStepDelta, q[kGripper]);
      if (q[kGripper] + dq[kGripper] <= 0.0) phase = Phase::hold;
    }
    q = step_joints(q, dq);
  }
  return ep;
}

inline Episode run_expert(const SceneSpec& scene, const ExpertConfig& cfg, std::uint64_t seed,
                          const ArmGeometry& geom = {}, const CameraIntrinsics& intr = {}) {
  const PlantModel plant = grow_plant(scene, geom);
  if (!is_partially_visible(
          check_partial_visibility(plant, forward_kinematics(geom, home_config()), intr)))
    throw std::invalid_argument("scene is not partially visible at the home pose");
  return run_expert_on(plant, scene, cfg, seed, geom, intr);
}

struct DemoSetEntry {
  Side side;
  std::uint64_t scene_seed;
  std::uint64_t expert_seed;
};

// Episode i is left for even i and right for odd i.
inline std::vector<DemoSetEntry> plan_demo_set(std::size_t n, std::uint64_t seed) {
  if (n % 2 != 0) throw std::invalid_argument("demo count must be even for left/right balance");
  std::vector<DemoSetEntry> plan(n);
  for (std::size_t i = 0; i < n; ++i)
    plan[i] = {i % 2 == 0 ? Side::left : Side::right, derive_seed(seed, 2 * i),
               derive_seed(seed, 2 * i + 1)};
  return plan;
}

inline std::vector<Episode> gen_demo_set(std::size_t n, std::uint64_t seed,
                                         const ExpertConfig& cfg = {}) {
  std::vector<Episode> out;
  out.reserve(n);
  for (const auto& e : plan_demo_set(n, seed))
    out.push_back(run_expert(make_training_scene(e.side, e.scene_seed), cfg, e.expert_seed));
  return out;
}

}  // namespace activebc
