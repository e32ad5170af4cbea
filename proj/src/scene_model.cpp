#include "segfield/scene_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "segfield/error.hpp"

namespace segfield {

std::size_t count_set(const BitMask& mask) {
  return static_cast<std::size_t>(
      std::count_if(mask.data().begin(), mask.data().end(), [](std::uint8_t b) { return b != 0; }));
}

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) {
    throw Error(Errc::invalid_argument, "camera focal lengths must be positive");
  }
  if (width <= 0 || height <= 0) {
    throw Error(Errc::invalid_argument, "camera image size must be positive");
  }
  if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height)) {
    throw Error(Errc::invalid_argument, "principal point outside the image");
  }
}

void CameraPose::validate() const {
  const Mat3 gram = rotation.transpose() * rotation;
  if (!rotation.allFinite() || (gram - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-6) {
    throw Error(Errc::invalid_argument, "camera rotation is not orthonormal");
  }
  if (std::abs(rotation.determinant() - 1.0) > 1e-6) {
    throw Error(Errc::invalid_argument, "camera rotation must have determinant +1");
  }
  if (!translation.allFinite()) {
    throw Error(Errc::invalid_argument, "camera translation is not finite");
  }
}

CameraPose CameraPose::look_at(const Vec3& eye, const Vec3& target, const Vec3& up) {
  const Vec3 z = (target - eye).normalized();
  Vec3 down = -up;
  down -= down.dot(z) * z;
  if (down.norm() < 1e-12) {
    // Looking along the up vector; pick any perpendicular.
    down = z.unitOrthogonal();
  }
  const Vec3 y = down.normalized();
  const Vec3 x = y.cross(z);
  CameraPose pose;
  pose.rotation.row(0) = x.transpose();
  pose.rotation.row(1) = y.transpose();
  pose.rotation.row(2) = z.transpose();
  pose.translation = -pose.rotation * eye;
  return pose;
}

void ViewImage::validate() const {
  intrinsics.validate();
  pose.validate();
  if (!rgb.same_shape(intrinsics.width, intrinsics.height)) {
    throw Error(Errc::dimension_mismatch, "view " + std::to_string(view_id) +
                                              ": rgb size does not match intrinsics");
  }
  if (depth && !depth->same_shape(intrinsics.width, intrinsics.height)) {
    throw Error(Errc::dimension_mismatch, "view " + std::to_string(view_id) +
                                              ": depth size does not match intrinsics");
  }
}

std::string to_string(MaskStatus status) {
  switch (status) {
    case MaskStatus::accepted: return "accepted";
    case MaskStatus::discarded_occluded: return "discarded_occluded";
    case MaskStatus::unprocessed: return "unprocessed";
  }
  return "unprocessed";
}

MaskStatus mask_status_from_string(const std::string& s) {
  if (s == "accepted") return MaskStatus::accepted;
  if (s == "discarded_occluded") return MaskStatus::discarded_occluded;
  if (s == "unprocessed") return MaskStatus::unprocessed;
  throw Error(Errc::parse, "unknown mask status '" + s + "'");
}

std::optional<PixelProjection> project_point(const Vec3& p, const CameraIntrinsics& intrinsics,
                                             const CameraPose& pose) {
  const Vec3 pc = pose.to_camera(p);
  if (!(pc.z() > 0.0)) return std::nullopt;
  const double u = intrinsics.fx * pc.x() / pc.z() + intrinsics.cx;
  const double v = intrinsics.fy * pc.y() / pc.z() + intrinsics.cy;
  if (!intrinsics.contains(u, v)) return std::nullopt;
  return PixelProjection{u, v, pc.z()};
}

Ray ray_for_pixel(double u, double v, const CameraIntrinsics& intrinsics, const CameraPose& pose,
                  double near, double far) {
  if (!intrinsics.contains(u, v)) {
    throw Error(Errc::invalid_argument, "pixel outside the image rectangle");
  }
  if (!(near >= 0.0 && near < far)) {
    throw Error(Errc::invalid_argument, "ray bounds must satisfy 0 <= near < far");
  }
  const Vec3 dir_cam((u - intrinsics.cx) / intrinsics.fx, (v - intrinsics.cy) / intrinsics.fy, 1.0);
  Ray ray;
  ray.origin = pose.center();
  ray.direction = (pose.rotation.transpose() * dir_cam).normalized();
  ray.near = near;
  ray.far = far;
  return ray;
}

Ray ray_for_pixel(double u, double v, const ViewImage& view, double near, double far) {
  return ray_for_pixel(u, v, view.intrinsics, view.pose, near, far);
}

double axis_cosine(double u, double v, const CameraIntrinsics& intrinsics) {
  const double x = (u - intrinsics.cx) / intrinsics.fx;
  const double y = (v - intrinsics.cy) / intrinsics.fy;
  return 1.0 / std::sqrt(x * x + y * y + 1.0);
}

}  // namespace segfield
