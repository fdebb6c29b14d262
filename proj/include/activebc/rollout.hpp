#pragma once

// Closed-loop execution of a controller in the simulator, and the success
// judge shared by rollouts, expert episodes and teleop recordings.

#include "activebc/arm.hpp"
#include "activebc/camera.hpp"
#include "activebc/dataset.hpp"
#include "activebc/episode.hpp"
#include "activebc/error.hpp"
#include "activebc/render.hpp"
#include "activebc/scene.hpp"

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace activebc {

inline constexpr double kCloseThreshold = 0.2;
inline constexpr double kJudgeCenterTolerancePx = 8.0;
inline constexpr int kJudgeStableFrames = 5;
inline constexpr int kRolloutSteps = 100;

enum class FailureReason { none, no_close, multiple_close, early_close, not_centered, lost_target, policy_fault };

inline std::string_view to_string(FailureReason r) {
  switch (r) {
    case FailureReason::none: return "none";
    case FailureReason::no_close: return "no_close";
    case FailureReason::multiple_close: return "multiple_close";
    case FailureReason::early_close: return "early_close";
    case FailureReason::not_centered: return "not_centered";
    case FailureReason::lost_target: return "lost_target";
    case FailureReason::policy_fault: return "policy_fault";
  }
  return "unknown";
}

struct Verdict {
  bool success = false;
  FailureReason reason = FailureReason::no_close;
  std::optional<std::size_t> close_frame;
};

struct RolloutResult {
  std::vector<Frame> frames;                            // frames[t] seen at joints[t]
  std::vector<JointConfig> joints;
  std::vector<std::array<double, kNumJoints>> predictions;  // predictions[t] issued at t
  std::vector<std::size_t> gripper_close_events;
  std::vector<std::optional<double>> centering_error_px;
  bool success = false;
  FailureReason failure_reason = FailureReason::no_close;
  std::string fault;  // numeric fault message, if any
};

// Frame indices t where q5 drops from above the threshold to at or below it.
inline std::vector<std::size_t> close_events(std::span<const JointConfig> joints) {
  std::vector<std::size_t> out;
  for (std::size_t t = 1; t < joints.size(); ++t)
    if (joints[t - 1][kGripper] > kCloseThreshold && joints[t][kGripper] <= kCloseThreshold)
      out.push_back(t);
  return out;
}

inline Verdict judge(std::span<const std::size_t> events,
                     std::span<const std::optional<double>> centering) {
  Verdict v;
  if (events.empty()) return v;
  if (events.size() > 1) {
    v.reason = FailureReason::multiple_close;
    return v;
  }
  const std::size_t k = events.front();
  v.close_frame = k;
  auto centered = [&](std::size_t t) {
    return t < centering.size() && centering[t] && *centering[t] <= kJudgeCenterTolerancePx;
  };
  // Earliest frame at which a full stable run has been observed.
  std::optional<std::size_t> stable_at;
  int run = 0;
  for (std::size_t t = 0; t < k && t < centering.size(); ++t) {
    run = centered(t) ? run + 1 : 0;
    if (run >= kJudgeStableFrames && !stable_at) stable_at = t;
  }
  if (k >= centering.size() || !centering[k]) {
    v.reason = FailureReason::lost_target;
    return v;
  }
  bool preceded = k >= static_cast<std::size_t>(kJudgeStableFrames);
  for (int i = 1; preceded && i <= kJudgeStableFrames; ++i) preceded = centered(k - i);
  if (centered(k) && preceded) {
    v.success = true;
    v.reason = FailureReason::none;
    return v;
  }
  v.reason = stable_at ? FailureReason::not_centered : FailureReason::early_close;
  return v;
}

inline void judge(RolloutResult& r) {
  r.gripper_close_events = close_events(r.joints);
  const auto v = judge(r.gripper_close_events, r.centering_error_px);
  r.success = v.success;
  r.failure_reason = v.reason;
}

// Recomputes centering from the episode's own scene and judges it.
inline RolloutResult trace_from_episode(const Episode& ep, const ArmGeometry& geom = {},
                                        const CameraIntrinsics& intr = {}) {
  validate(ep);
  const PlantModel plant = grow_plant(ep.meta.scene, geom);
  RolloutResult r;
  r.frames = ep.frames;
  r.joints = ep.joints;
  for (std::size_t t = 0; t + 1 < ep.joints.size(); ++t) {
    const auto d = difference(ep.joints[t + 1], ep.joints[t]);
    r.predictions.push_back(d.dq);
  }
  for (const auto& q : ep.joints)
    r.centering_error_px.push_back(centering_error_px(plant, forward_kinematics(geom, q), intr));
  judge(r);
  return r;
}

inline Verdict judge_episode(const Episode& ep) {
  const auto r = trace_from_episode(ep);
  return {r.success, r.failure_reason,
          r.gripper_close_events.size() == 1 ? std::optional(r.gripper_close_events.front())
                                             : std::nullopt};
}

// Next commanded configuration from a prediction.
inline JointConfig apply_prediction(const JointConfig& q, const std::array<double, kNumJoints>& p,
                                    Representation rep) {
  JointDelta dq;
  if (rep == Representation::delta) {
    dq.dq = p;
  } else {
    for (std::size_t j = 0; j < kNumJoints; ++j) dq[j] = p[j] - q[j];
  }
  return step_joints(q, dq);
}

// A controller provides reset(first frame), push(frame), predict() and
// representation(). See PolicyRunner.
template <typename Controller>
RolloutResult rollout(Controller& controller, const SceneSpec& scene, int steps = kRolloutSteps,
                      const ArmGeometry& geom = {}, const CameraIntrinsics& intr = {}) {
  if (steps < 1) throw std::invalid_argument("rollout needs at least one step");
  validate(scene);
  const PlantModel plant = grow_plant(scene, geom);
  RolloutResult r;
  JointConfig q = home_config();
  auto observe = [&] {
    const CameraPose pose = forward_kinematics(geom, q);
    r.frames.push_back(render(plant, pose, intr));
    r.joints.push_back(q);
    r.centering_error_px.push_back(centering_error_px(plant, pose, intr));
  };
  observe();
  try {
    controller.reset(r.frames.back());
    for (int step = 0; step < steps; ++step) {
      const auto p = controller.predict();
      for (double v : p)
        if (!std::isfinite(v)) throw NumericFault("controller output");
      r.predictions.push_back(p);
      q = apply_prediction(q, p, controller.representation());
      observe();
      controller.push(r.frames.back());
    }
  } catch (const NumericFault& e) {
    judge(r);
    r.success = false;
    r.failure_reason = FailureReason::policy_fault;
    r.fault = e.what();
    return r;
  }
  judge(r);
  return r;
}

// Replays a fixed list of deltas, ignoring observations.
class ReplayController {
 public:
  explicit ReplayController(std::vector<std::array<double, kNumJoints>> deltas)
      : deltas_(std::move(deltas)) {}

  static ReplayController from_episode(const Episode& ep) {
    std::vector<std::array<double, kNumJoints>> d;
    for (std::size_t t = 0; t + 1 < ep.joints.size(); ++t)
      d.push_back(difference(ep.joints[t + 1], ep.joints[t]).dq);
    return ReplayController(std::move(d));
  }

  void reset(const Frame&) { next_ = 0; }
  void push(const Frame&) {}
  std::array<double, kNumJoints> predict() {
    return next_ < deltas_.size() ? deltas_[next_++] : std::array<double, kNumJoints>{};
  }
  Representation representation() const { return Representation::delta; }

 private:
  std::vector<std::array<double, kNumJoints>> deltas_;
  std::size_t next_ = 0;
};

class ZeroController {
 public:
  void reset(const Frame&) {}
  void push(const Frame&) {}
  std::array<double, kNumJoints> predict() const { return {}; }
  Representation representation() const { return Representation::delta; }
};

// Stores a rollout as an episode file so it can be replayed or inspected.
inline Episode rollout_to_episode(const RolloutResult& r, const SceneSpec& scene,
                                  std::string source = "rollout") {
  Episode ep;
  ep.frames = r.frames;
  ep.joints = r.joints;
  ep.meta.scene = scene;
  ep.meta.source = std::move(source);
  return ep;
}

}  // namespace activebc
