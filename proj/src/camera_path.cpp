#include "segfield/camera_path.hpp"

#include <cmath>
#include <numbers>

#include "segfield/error.hpp"

namespace segfield {

std::vector<CameraPose> orbit_path(const OrbitParams& p) {
  if (p.count < 1 || !(p.radius > 0.0)) {
    throw Error(Errc::invalid_argument, "orbit needs count >= 1 and radius > 0");
  }
  const Vec3 up = p.up.normalized();
  // Azimuth zero points along world x projected onto the orbit plane.
  Vec3 e1 = Vec3::UnitX() - up.x() * up;
  if (e1.norm() < 1e-6) e1 = Vec3::UnitY() - up.y() * up;
  e1.normalize();
  const Vec3 e2 = up.cross(e1);
  std::vector<CameraPose> poses;
  poses.reserve(p.count);
  for (int j = 0; j < p.count; ++j) {
    const double azimuth = p.start_azimuth + 2.0 * std::numbers::pi * j / p.count;
    const double elevation = p.elevation + p.elevation_swing * std::sin(2.0 * azimuth);
    const Vec3 dir = std::cos(elevation) * (std::cos(azimuth) * e1 + std::sin(azimuth) * e2) +
                     std::sin(elevation) * up;
    poses.push_back(CameraPose::look_at(p.center + p.radius * dir, p.center, up));
  }
  return poses;
}

std::vector<CameraPose> line_path(const LineParams& p) {
  if (p.keypoints.size() < 2 || p.count < 2) {
    throw Error(Errc::invalid_argument, "line path needs >= 2 keypoints and count >= 2");
  }
  std::vector<double> cumulative{0.0};
  for (std::size_t i = 1; i < p.keypoints.size(); ++i) {
    cumulative.push_back(cumulative.back() + (p.keypoints[i] - p.keypoints[i - 1]).norm());
  }
  const double total = cumulative.back();
  if (!(total > 0.0)) throw Error(Errc::invalid_argument, "line path has zero length");
  std::vector<CameraPose> poses;
  std::size_t seg = 0;
  for (int j = 0; j < p.count; ++j) {
    const double s = total * j / (p.count - 1);
    while (seg + 2 < cumulative.size() && s > cumulative[seg + 1]) ++seg;
    const double len = cumulative[seg + 1] - cumulative[seg];
    const double a = len > 0.0 ? (s - cumulative[seg]) / len : 0.0;
    const Vec3 eye = (1.0 - a) * p.keypoints[seg] + a * p.keypoints[seg + 1];
    poses.push_back(CameraPose::look_at(eye, p.target, p.up));
  }
  return poses;
}

}  // namespace segfield
