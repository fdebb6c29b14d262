#pragma once

// Pinhole camera model shared by the renderer and the visibility checks.
// Rasterization math is float32 with explicit rounding so that frames are
// byte-identical wherever IEEE-754 single precision is honored.

#include "activebc/arm.hpp"

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>

namespace activebc {

inline constexpr int kImageSize = 64;

struct CameraIntrinsics {
  double hfov = 0.75;  // radians
  int width = kImageSize;
  int height = kImageSize;
  double near_plane = 0.02;  // meters

  void validate() const {
    if (!(hfov > 0.0 && hfov < 3.14159265358979))
      throw std::invalid_argument("field of view must lie in (0, pi)");
    if (width != kImageSize || height != kImageSize)
      throw std::invalid_argument("image must be 64x64");
    if (!(near_plane > 0.0)) throw std::invalid_argument("near plane must be positive");
  }

  // Focal length in pixels.
  float focal_px() const {
    return static_cast<float>(width) * 0.5f / static_cast<float>(std::tan(hfov * 0.5));
  }
};

// Pixel coordinates put pixel (row i, column j) at (u = j, v = i); the
// optical axis lands on (32, 32). u grows to the right, v downward.
struct Projection {
  float u = 0.0f;
  float v = 0.0f;
  float depth = 0.0f;  // distance along the optical axis
};

// Camera-frame coordinates of a world point: x forward, y left, z up.
struct CameraFrameF {
  float rt[3][3];  // camera-from-world rotation
  float t[3];      // camera position

  explicit CameraFrameF(const CameraPose& pose) {
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) rt[r][c] = static_cast<float>(pose.orientation(c, r));
    for (int k = 0; k < 3; ++k) t[k] = static_cast<float>(pose.position(k));
  }

  void to_camera(const float p[3], float out[3]) const {
    const float d[3] = {p[0] - t[0], p[1] - t[1], p[2] - t[2]};
    for (int r = 0; r < 3; ++r) out[r] = (rt[r][0] * d[0] + rt[r][1] * d[1]) + rt[r][2] * d[2];
  }
};

// Projects a world point; empty when it lies in front of the near plane.
inline std::optional<Projection> project_point(const CameraFrameF& cam,
                                               const CameraIntrinsics& intr,
                                               const float world[3]) {
  float c[3];
  cam.to_camera(world, c);
  if (!(c[0] >= static_cast<float>(intr.near_plane))) return std::nullopt;
  const float f = intr.focal_px();
  const float cx = static_cast<float>(intr.width) * 0.5f;
  const float cy = static_cast<float>(intr.height) * 0.5f;
  Projection p;
  p.depth = c[0];
  p.u = cx - f * c[1] / c[0];
  p.v = cy - f * c[2] / c[0];
  return p;
}

// Round half away from zero, saturated to the int range used for pixels.
inline std::int32_t round_px(float x) {
  if (!(x > -1.0e6f)) return -1000000;
  if (!(x < 1.0e6f)) return 1000000;
  return static_cast<std::int32_t>(std::round(x));
}

inline bool pixel_in_image(const CameraIntrinsics& intr, std::int32_t col, std::int32_t row) {
  return col >= 0 && row >= 0 && col < intr.width && row < intr.height;
}

}  // namespace activebc
