#include "segfield/editor.hpp"

#include <cmath>

#include <Eigen/Geometry>

#include "segfield/error.hpp"
#include "segfield/json_util.hpp"
#include "segfield/mask_ops.hpp"

using nlohmann::json;

namespace segfield {

void RigidTransform::validate() const {
  if (!rotation.allFinite() || !translation.allFinite() || !color_matrix.allFinite() ||
      !color_offset.allFinite()) {
    throw Error(Errc::invalid_argument, "transform has non-finite entries");
  }
  if (!((rotation * rotation.transpose()) - Mat3::Identity()).isZero(1e-6) ||
      std::abs(rotation.determinant() - 1.0) > 1e-6) {
    throw Error(Errc::invalid_argument, "rotation is not orthonormal with determinant +1");
  }
  if (!(scale > 0.0) || !std::isfinite(scale)) {
    throw Error(Errc::invalid_argument, "scale must be positive");
  }
}

Mat3 RigidTransform::axis_angle(const Vec3& v) {
  const double angle = v.norm();
  if (angle == 0.0) return Mat3::Identity();
  return Eigen::AngleAxisd(angle, v / angle).toRotationMatrix();
}

std::map<int, Mask> removal_masks(const std::map<int, Mask>& masks) {
  std::map<int, Mask> out;
  for (const auto& [view, m] : masks) {
    Mask inv = m;
    if (m.status == MaskStatus::accepted) inv.bits = complement(m.bits);
    out[view] = std::move(inv);
  }
  return out;
}

TrainResult train_background(std::span<const ViewImage> views, const std::map<int, Mask>& masks,
                             const SparseCloud& scene_cloud, TrainConfig cfg,
                             const EvalView* held_out, std::ostream* jsonl) {
  cfg.out_of_mask_fraction = 0.0;
  cfg.sparse_depth_fraction = 0.0;
  // Pixels that see nothing are black and must stay empty.
  cfg.random_background = false;
  return train(views, removal_masks(masks), scene_cloud, cfg, held_out, jsonl);
}

CompositeField::CompositeField(const VoxelField& background, const VoxelField& object,
                               RigidTransform xform)
    : xform_(std::move(xform)) {
  xform_.validate();
  background.validate();
  object.validate();
  parts_.push_back(PlacedField{&background});
  PlacedField obj{&object};
  obj.rotation = xform_.rotation;
  obj.translation = xform_.translation;
  obj.scale = xform_.scale;
  obj.color_matrix = xform_.color_matrix;
  obj.color_offset = xform_.color_offset;
  parts_.push_back(obj);
}

void CompositeField::query(const Vec3& x, double& sigma, Vec3& rgb) const {
  double s_bg, s_obj;
  Vec3 c_bg, c_obj;
  parts_[0].field->query(x, s_bg, c_bg);
  parts_[1].field->query(xform_.inverse(x), s_obj, c_obj);
  // Lengths grow by `scale`, so the object's density per world unit shrinks by it.
  s_obj /= xform_.scale;
  c_obj = (xform_.color_matrix * c_obj + xform_.color_offset).cwiseMax(0.0).cwiseMin(1.0);
  sigma = s_bg + s_obj;
  rgb = sigma > 0.0 ? Vec3((s_bg * c_bg + s_obj * c_obj) / sigma) : Vec3::Zero();
}

CompositeField compose(const VoxelField& background, const VoxelField& object,
                       const RigidTransform& xform) {
  return CompositeField(background, object, xform);
}

FieldImage render_view(const CompositeField& field, const CameraIntrinsics& intrinsics,
                       const CameraPose& pose, int n_samples) {
  return render_view(field.parts(), intrinsics, pose, n_samples);
}

EditScript parse_edit_script(const json& j, const std::filesystem::path& base_dir) {
  json_util::check_keys(j,
                        {"background_ckpt", "object_ckpt", "rotation", "translation", "scale",
                         "color_map"},
                        "edit script");
  try {
    EditScript s;
    if (!j.contains("object_ckpt")) throw Error(Errc::parse, "edit script: missing object_ckpt");
    s.object_ckpt = base_dir / j.at("object_ckpt").get<std::string>();
    if (j.contains("background_ckpt")) {
      s.background_ckpt = base_dir / j.at("background_ckpt").get<std::string>();
    }
    if (j.contains("rotation")) s.xform.rotation = RigidTransform::axis_angle(json_util::vec3(j["rotation"]));
    if (j.contains("translation")) s.xform.translation = json_util::vec3(j["translation"]);
    if (j.contains("scale")) s.xform.scale = j["scale"].get<double>();
    if (j.contains("color_map")) {
      const json& cm = j["color_map"];
      json_util::check_keys(cm, {"matrix", "offset"}, "edit script color_map");
      if (cm.contains("matrix")) s.xform.color_matrix = json_util::mat3(cm["matrix"]);
      if (cm.contains("offset")) s.xform.color_offset = json_util::vec3(cm["offset"]);
    }
    s.xform.validate();
    return s;
  } catch (const json::exception& e) {
    throw Error(Errc::parse, std::string("edit script: ") + e.what());
  }
}

EditScript read_edit_script(const std::filesystem::path& path) {
  return parse_edit_script(json_util::read_file(path), path.parent_path());
}

}  // namespace segfield
