#pragma once

// Kinematic model of a 6-DOF table-mounted arm with a wrist camera.
//
// Joint layout: q0 base yaw, q1 shoulder pitch, q2 elbow pitch, q3 wrist
// pitch, q4 wrist roll (radians), q5 gripper aperture (0 closed, 1 open).
// World frame: x forward from the base at zero yaw, y left, z up. A positive
// pitch tilts the distal chain downward.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <string>

namespace activebc {

inline constexpr std::size_t kNumJoints = 6;
inline constexpr std::size_t kGripper = 5;

// Largest magnitude of any single joint change per control step.
inline constexpr double kMaxStepDelta = 0.3;

// Joint states are stored on a fixed encoder grid of 2^-21 rad. Grid values
// in [-4, 4] are exact in float32, and so are their differences, which keeps
// stored trajectories and the deltas derived from them bit-consistent.
inline constexpr double kEncoderResolution = 0x1.0p-21;

struct JointLimits {
  std::array<double, kNumJoints> lo{-1.2, -1.5, -1.5, -1.5, -std::numbers::pi, 0.0};
  std::array<double, kNumJoints> hi{1.2, 1.5, 1.5, 1.5, std::numbers::pi, 1.0};
};

inline constexpr JointLimits kJointLimits{};

struct JointConfig {
  std::array<double, kNumJoints> q{};

  double& operator[](std::size_t i) { return q[i]; }
  double operator[](std::size_t i) const { return q[i]; }
  friend bool operator==(const JointConfig&, const JointConfig&) = default;
};

struct JointDelta {
  std::array<double, kNumJoints> dq{};

  double& operator[](std::size_t i) { return dq[i]; }
  double operator[](std::size_t i) const { return dq[i]; }
  friend bool operator==(const JointDelta&, const JointDelta&) = default;
};

// Arm straight out, gripper open.
inline JointConfig home_config() {
  JointConfig q;
  q[kGripper] = 1.0;
  return q;
}

inline bool is_finite(const JointConfig& q) {
  for (double v : q.q)
    if (!std::isfinite(v)) return false;
  return true;
}

inline bool within_limits(const JointConfig& q) {
  for (std::size_t i = 0; i < kNumJoints; ++i)
    if (!(q[i] >= kJointLimits.lo[i] && q[i] <= kJointLimits.hi[i])) return false;
  return true;
}

inline void validate(const JointConfig& q) {
  if (!is_finite(q)) throw std::invalid_argument("joint config has a non-finite value");
  if (!within_limits(q)) throw std::invalid_argument("joint config outside joint limits");
}

struct CameraPose {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  // world-from-camera; columns are the camera's forward, left and up axes.
  Eigen::Matrix3d orientation = Eigen::Matrix3d::Identity();
};

struct ArmGeometry {
  double l1 = 0.12;  // shoulder to elbow
  double l2 = 0.14;  // elbow to wrist pitch
  double l3 = 0.12;  // wrist pitch to wrist roll housing
  double l4 = 0.06;  // final segment, ends at the camera
  double base_height = 0.07;
  // Camera distance forward of the wrist-roll joint, along the roll axis. The
  // roll joint sits inside the final segment, so camera_offset <= l4.
  double camera_offset = 0.03;

  void validate() const {
    if (!(l1 > 0 && l2 > 0 && l3 > 0 && l4 > 0 && base_height > 0 && camera_offset > 0))
      throw std::invalid_argument("arm geometry lengths must be positive");
    if (camera_offset > l4)
      throw std::invalid_argument("camera offset must lie within the final segment");
  }
};

namespace detail {

inline Eigen::Matrix3d rot_z(double a) {
  return Eigen::AngleAxisd(a, Eigen::Vector3d::UnitZ()).toRotationMatrix();
}
inline Eigen::Matrix3d rot_y(double a) {
  return Eigen::AngleAxisd(a, Eigen::Vector3d::UnitY()).toRotationMatrix();
}
inline Eigen::Matrix3d rot_x(double a) {
  return Eigen::AngleAxisd(a, Eigen::Vector3d::UnitX()).toRotationMatrix();
}

}  // namespace detail

// Chain: base yaw -> shoulder pitch -> l1 -> elbow pitch -> l2 -> wrist pitch
// -> l3 + (l4 - offset) -> wrist roll -> offset -> camera.
inline CameraPose forward_kinematics(const ArmGeometry& geom, const JointConfig& q) {
  validate(q);
  geom.validate();
  using detail::rot_x;
  using detail::rot_y;
  using detail::rot_z;
  const Eigen::Vector3d x = Eigen::Vector3d::UnitX();

  const Eigen::Matrix3d r_shoulder = rot_z(q[0]) * rot_y(q[1]);
  const Eigen::Matrix3d r_elbow = r_shoulder * rot_y(q[2]);
  const Eigen::Matrix3d r_wrist = r_elbow * rot_y(q[3]);
  const Eigen::Matrix3d r_roll = r_wrist * rot_x(q[4]);

  CameraPose pose;
  pose.position = Eigen::Vector3d(0.0, 0.0, geom.base_height) + r_shoulder * (geom.l1 * x) +
                  r_elbow * (geom.l2 * x) +
                  r_wrist * ((geom.l3 + geom.l4 - geom.camera_offset) * x) +
                  r_roll * (geom.camera_offset * x);
  pose.orientation = r_roll;
  return pose;
}

inline JointDelta clamp_delta(const JointDelta& dq) {
  JointDelta out;
  for (std::size_t i = 0; i < kNumJoints; ++i)
    out[i] = std::clamp(dq[i], -kMaxStepDelta, kMaxStepDelta);
  return out;
}

inline JointConfig apply_delta(const JointConfig& q, const JointDelta& dq) {
  validate(q);
  for (double v : dq.dq)
    if (!std::isfinite(v)) throw std::invalid_argument("joint delta has a non-finite value");
  JointConfig out;
  for (std::size_t i = 0; i < kNumJoints; ++i)
    out[i] = std::clamp(q[i] + dq[i], kJointLimits.lo[i], kJointLimits.hi[i]);
  return out;
}

// Rounds every joint to the encoder grid. A value rounded past an off-grid
// limit moves one grid step back inside.
inline JointConfig snap_to_encoder(const JointConfig& q) {
  JointConfig out;
  for (std::size_t i = 0; i < kNumJoints; ++i) {
    double v = std::nearbyint(q[i] / kEncoderResolution) * kEncoderResolution;
    if (v > kJointLimits.hi[i]) v -= kEncoderResolution;
    if (v < kJointLimits.lo[i]) v += kEncoderResolution;
    out[i] = v;
  }
  return out;
}

// One simulator control step: clamp, apply, and quantize.
inline JointConfig step_joints(const JointConfig& q, const JointDelta& dq) {
  return snap_to_encoder(apply_delta(q, clamp_delta(dq)));
}

inline JointDelta difference(const JointConfig& to, const JointConfig& from) {
  JointDelta d;
  for (std::size_t i = 0; i < kNumJoints; ++i) d[i] = to[i] - from[i];
  return d;
}

}  // namespace activebc
