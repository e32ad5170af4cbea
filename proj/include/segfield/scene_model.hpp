#pragma once

#include <cmath>
#include <optional>
#include <string>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "segfield/raster.hpp"

namespace segfield {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Pixel convention: (u, v) from the top-left, u rightward, v downward,
// pixel centers at integer coordinates. The image rectangle is
// [-0.5, width - 0.5) x [-0.5, height - 0.5).

struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;

  void validate() const;
  bool contains(double u, double v) const noexcept {
    return u >= -0.5 && v >= -0.5 && u < width - 0.5 && v < height - 0.5;
  }
};

/// World-to-camera rigid transform: x_cam = rotation * x_world + translation.
struct CameraPose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  void validate() const;
  Vec3 center() const { return -rotation.transpose() * translation; }
  /// Optical axis in world coordinates.
  Vec3 forward() const { return rotation.row(2).transpose(); }
  Vec3 to_camera(const Vec3& world) const { return rotation * world + translation; }

  /// Camera at `eye` looking at `target`; image v axis points away from `up`.
  static CameraPose look_at(const Vec3& eye, const Vec3& target, const Vec3& up);
};

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();
  double near = 0.0;
  double far = 1.0;

  Vec3 at(double t) const { return origin + t * direction; }
};

struct ViewImage {
  int view_id = 0;
  std::string name;
  RgbImage rgb;
  std::optional<DepthMap> depth;  // z-depth in scene units, 0 = missing
  CameraIntrinsics intrinsics;
  CameraPose pose;

  void validate() const;
};

enum class MaskStatus { accepted, discarded_occluded, unprocessed };

std::string to_string(MaskStatus status);
MaskStatus mask_status_from_string(const std::string& s);

struct Mask {
  int view_id = 0;
  BitMask bits;
  double score = 0.0;
  MaskStatus status = MaskStatus::unprocessed;
};

struct PixelProjection {
  double u = 0.0;
  double v = 0.0;
  double depth = 0.0;  // along the optical axis
};

/// Pinhole projection; empty when behind the camera or outside the image.
std::optional<PixelProjection> project_point(const Vec3& p, const CameraIntrinsics& intrinsics,
                                             const CameraPose& pose);

/// Unit ray through pixel (u, v), starting at the camera center.
Ray ray_for_pixel(double u, double v, const CameraIntrinsics& intrinsics, const CameraPose& pose,
                  double near, double far);
Ray ray_for_pixel(double u, double v, const ViewImage& view, double near, double far);

/// Cosine between the ray direction through (u, v) and the optical axis;
/// converts z-depth to distance along the ray (t = z / cosine).
double axis_cosine(double u, double v, const CameraIntrinsics& intrinsics);

/// Nearest pixel index for a continuous pixel coordinate.
inline int pixel_index(double coord) { return static_cast<int>(std::lround(coord)); }

}  // namespace segfield
