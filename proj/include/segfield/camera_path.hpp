#pragma once

#include <vector>

#include "segfield/scene_model.hpp"

namespace segfield {

/// Ring of cameras around `center`, all looking at it. Camera j sits at
/// azimuth start_azimuth + 2*pi*j/count and elevation
/// elevation + elevation_swing * sin(2 * azimuth), so every camera is exactly
/// `radius` from the center.
struct OrbitParams {
  Vec3 center = Vec3::Zero();
  double radius = 3.0;
  int count = 8;
  double elevation = 0.0;        // radians above the plane normal to `up`
  double elevation_swing = 0.0;  // radians
  double start_azimuth = 0.0;    // radians
  Vec3 up = Vec3::UnitZ();
};

/// Piecewise-linear walk through `keypoints`, sampled at `count` positions
/// equally spaced by arc length, each looking at `target`.
struct LineParams {
  std::vector<Vec3> keypoints;
  int count = 2;
  Vec3 target = Vec3::Zero();
  Vec3 up = Vec3::UnitZ();
};

std::vector<CameraPose> orbit_path(const OrbitParams& params);
std::vector<CameraPose> line_path(const LineParams& params);

}  // namespace segfield
