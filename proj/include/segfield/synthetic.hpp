#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "segfield/colmap_io.hpp"
#include "segfield/prompts.hpp"
#include "segfield/scene_model.hpp"

namespace segfield {

enum class ShapeKind { sphere, box };

struct SceneObject {
  ShapeKind shape = ShapeKind::sphere;
  Vec3 center = Vec3::Zero();
  Vec3 size = Vec3::Constant(0.5);  // sphere: size.x() is the radius; box: full extents
  Vec3 albedo = Vec3(0.8, 0.2, 0.2);
  int instance_id = 1;
};

/// Closed room seen from inside; its walls carry instance id 0.
struct RoomBox {
  Vec3 min = Vec3::Constant(-5.0);
  Vec3 max = Vec3::Constant(5.0);
  Vec3 albedo = Vec3(0.6, 0.6, 0.6);
};

struct SceneSpec {
  std::vector<SceneObject> objects;
  std::optional<RoomBox> room;
  std::vector<CameraPose> cameras;
  CameraIntrinsics intrinsics;
  Vec3 light = Vec3(0.3, -0.4, 0.866).normalized();  // unit vector toward the light
  double ambient = 0.2;

  void validate() const;
  SceneSpec without_instance(int instance_id) const;
};

struct RenderedView {
  ViewImage view;
  InstanceMap instances;
};

struct SurfaceHit {
  double t = 0.0;
  Vec3 normal = Vec3::UnitZ();
  Vec3 albedo = Vec3::Zero();
  int instance_id = 0;
};

/// Nearest surface along origin + t * direction for t > 0.
std::optional<SurfaceHit> trace_ray(const SceneSpec& spec, const Vec3& origin,
                                    const Vec3& direction);

/// Lambertian shading, a single directional light and ambient term, no shadows.
/// View ids start at `first_view_id`.
std::vector<RenderedView> render_scene(const SceneSpec& spec, int first_view_id = 1);

struct FabricatedCloud {
  SparseCloud cloud;
  std::map<PointId, int> point_instance;  // ground-truth instance id per point
};

/// Samples surface points by area, tracks each into every view where it is the
/// nearest surface (within 1e-3) and its feature pixel shows its instance, and
/// perturbs features by Gaussian noise of `noise_px`. Points seen by fewer than
/// two views are dropped.
FabricatedCloud fabricate_sparse_cloud(const SceneSpec& spec,
                                       const std::vector<RenderedView>& views, int n_points,
                                       double noise_px, std::uint64_t seed);

/// Ground-truth segmentation: union of the connected instance regions under
/// positive prompts (plus the majority instance under the box), minus regions
/// of instances vetoed by negative prompts. Positive `boundary_px` dilates the
/// result, negative erodes it.
Mask oracle_segment(const InstanceMap& instances, const PromptSet& prompts, int view_id = 0,
                    int boundary_px = 0);

/// Tight boxes around each connected region of `instance_id`, scored by area
/// relative to the largest region, sorted by descending score.
std::vector<ScoredBox> oracle_boxes(const InstanceMap& instances, int instance_id);

/// Connected 4-neighbour regions of equal id; labels start at 1, id 0 pixels get 0.
Raster<std::int32_t> label_regions(const InstanceMap& instances, int* region_count = nullptr);

BitMask instance_mask(const InstanceMap& instances, int instance_id);

/// Named test scenes: "sphere", "two-spheres", "occluded", "occlusion-free",
/// "floor-sphere", "small-object".
SceneSpec preset_scene(const std::string& name);

}  // namespace segfield
