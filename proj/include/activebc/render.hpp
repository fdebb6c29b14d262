#pragma once

// Software rasterizer for the 64x64 egocentric view.
//
// Each sphere is drawn as a filled disk: center = rounded projection of the
// sphere center, radius = round(f * r / depth). Disks are painted far to near
// (ties by sphere index) over a white background. Colors are scaled by a
// depth shade clamp(1 - 0.8 * (depth - 0.2), 0.5, 1). All arithmetic after
// the pose is float32 with round-half-away-from-zero, and coverage is an
// integer test, so output bytes do not depend on evaluation order tricks.

#include "activebc/camera.hpp"
#include "activebc/scene.hpp"

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

namespace activebc {

inline constexpr std::size_t kFrameBytes = kImageSize * kImageSize * 3;

// 64x64 RGB, row-major, 8 bits per channel.
struct Frame {
  std::array<std::uint8_t, kFrameBytes> pixels;

  Frame() { pixels.fill(255); }

  std::uint8_t* at(int row, int col) { return &pixels[(row * kImageSize + col) * 3]; }
  const std::uint8_t* at(int row, int col) const {
    return &pixels[(row * kImageSize + col) * 3];
  }
  friend bool operator==(const Frame&, const Frame&) = default;
};

inline float depth_shade(float depth) {
  return std::clamp(1.0f - 0.8f * (depth - 0.2f), 0.5f, 1.0f);
}

inline Frame render(const PlantModel& plant, const CameraPose& pose,
                    const CameraIntrinsics& intr = {}) {
  Frame frame;
  const CameraFrameF cam(pose);
  const float f = intr.focal_px();

  struct Disk {
    float depth;
    std::size_t index;
    std::int32_t cu, cv, radius;
    std::array<std::uint8_t, 3> rgb;
  };
  std::vector<Disk> disks;
  disks.reserve(plant.spheres.size());
  for (std::size_t i = 0; i < plant.spheres.size(); ++i) {
    const Sphere& s = plant.spheres[i];
    const auto p = project_point(cam, intr, s.center.data());
    if (!p) continue;
    Disk d{p->depth, i, round_px(p->u), round_px(p->v), round_px(f * s.radius / p->depth), {}};
    const float shade = depth_shade(p->depth);
    for (int c = 0; c < 3; ++c)
      d.rgb[c] = static_cast<std::uint8_t>(
          std::clamp(round_px(static_cast<float>(s.rgb[c]) * shade), 0, 255));
    disks.push_back(d);
  }
  std::sort(disks.begin(), disks.end(), [](const Disk& a, const Disk& b) {
    if (a.depth != b.depth) return a.depth > b.depth;
    return a.index < b.index;
  });

  for (const Disk& d : disks) {
    const std::int64_t r = d.radius;
    const std::int64_t r2 = r * r;
    const std::int64_t row_lo = std::max<std::int64_t>(0, d.cv - r);
    const std::int64_t row_hi = std::min<std::int64_t>(intr.height - 1, d.cv + r);
    const std::int64_t col_lo = std::max<std::int64_t>(0, d.cu - r);
    const std::int64_t col_hi = std::min<std::int64_t>(intr.width - 1, d.cu + r);
    for (std::int64_t row = row_lo; row <= row_hi; ++row) {
      const std::int64_t dy = row - d.cv;
      for (std::int64_t col = col_lo; col <= col_hi; ++col) {
        const std::int64_t dx = col - d.cu;
        if (dx * dx + dy * dy > r2) continue;
        std::uint8_t* px = frame.at(static_cast<int>(row), static_cast<int>(col));
        px[0] = d.rgb[0];
        px[1] = d.rgb[1];
        px[2] = d.rgb[2];
      }
    }
  }
  return frame;
}

struct PixelPoint {
  double u = 0.0;
  double v = 0.0;
};

// Mean projected position of the sphere centers that land inside the image.
inline std::optional<PixelPoint> plant_centroid_px(const PlantModel& plant,
                                                   const CameraPose& pose,
                                                   const CameraIntrinsics& intr = {}) {
  const CameraFrameF cam(pose);
  double su = 0.0, sv = 0.0;
  std::size_t n = 0;
  for (const auto& s : plant.spheres) {
    const auto p = project_point(cam, intr, s.center.data());
    if (!p || !pixel_in_image(intr, round_px(p->u), round_px(p->v))) continue;
    su += p->u;
    sv += p->v;
    ++n;
  }
  if (n == 0) return std::nullopt;
  return PixelPoint{su / static_cast<double>(n), sv / static_cast<double>(n)};
}

inline std::optional<double> centering_error_px(const PlantModel& plant, const CameraPose& pose,
                                                 const CameraIntrinsics& intr = {}) {
  const auto c = plant_centroid_px(plant, pose, intr);
  if (!c) return std::nullopt;
  const double du = c->u - intr.width * 0.5;
  const double dv = c->v - intr.height * 0.5;
  return std::sqrt(du * du + dv * dv);
}

}  // namespace activebc
