#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "segfield/radiance_field.hpp"

namespace segfield {

/// Places an object field in the world: x_world = scale * rotation * x + translation.
/// Object colors go through clamp(color_matrix * c + color_offset, 0, 1).
struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  double scale = 1.0;
  Mat3 color_matrix = Mat3::Identity();
  Vec3 color_offset = Vec3::Zero();

  void validate() const;
  Vec3 apply(const Vec3& x) const { return scale * (rotation * x) + translation; }
  Vec3 inverse(const Vec3& x) const { return rotation.transpose() * (x - translation) / scale; }

  /// Rotation from an axis-angle vector (angle = norm, radians).
  static Mat3 axis_angle(const Vec3& v);
};

/// Complement of every accepted mask; the background field learns only from
/// pixels outside the object. Other masks keep their status and stay unused.
std::map<int, Mask> removal_masks(const std::map<int, Mask>& masks);

/// Background field for object removal: trained on the complement masks over
/// the whole cloud's box, with no out-of-mask rays and a black backdrop.
TrainResult train_background(std::span<const ViewImage> views, const std::map<int, Mask>& masks,
                             const SparseCloud& scene_cloud, TrainConfig cfg,
                             const EvalView* held_out = nullptr, std::ostream* jsonl = nullptr);

/// Background plus a transformed object, rendered as one medium.
class CompositeField {
 public:
  CompositeField(const VoxelField& background, const VoxelField& object, RigidTransform xform);

  /// Merged density and density-weighted color at a world point.
  void query(const Vec3& x, double& sigma, Vec3& rgb) const;
  std::span<const PlacedField> parts() const { return parts_; }

 private:
  RigidTransform xform_;
  std::vector<PlacedField> parts_;
};

CompositeField compose(const VoxelField& background, const VoxelField& object,
                       const RigidTransform& xform);

FieldImage render_view(const CompositeField& field, const CameraIntrinsics& intrinsics,
                       const CameraPose& pose, int n_samples);

/// Edit script: {background_ckpt, object_ckpt, rotation (axis-angle),
/// translation, scale, color_map: {matrix, offset}}. Checkpoint paths are
/// relative to the script's directory. background_ckpt may be omitted to
/// render the object alone.
struct EditScript {
  std::optional<std::filesystem::path> background_ckpt;
  std::filesystem::path object_ckpt;
  RigidTransform xform;
};

EditScript parse_edit_script(const nlohmann::json& j, const std::filesystem::path& base_dir);
EditScript read_edit_script(const std::filesystem::path& path);

}  // namespace segfield
