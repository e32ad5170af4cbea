#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "segfield/scene_model.hpp"

namespace segfield {

using PointId = std::int64_t;

struct TrackElement {
  int view_id = 0;
  int feature_index = 0;
  friend bool operator==(const TrackElement&, const TrackElement&) = default;
};

struct Point3D {
  Vec3 xyz = Vec3::Zero();
  std::array<std::uint8_t, 3> rgb{0, 0, 0};
  double error = 0.0;
  std::vector<TrackElement> track;
};

struct Feature {
  Vec2 uv = Vec2::Zero();
  std::optional<PointId> point_id;
};

/// Sparse reconstruction with bidirectional 2D/3D links.
///
/// Integrity: for every point p and every (v, f) in p.track,
/// features[v][f].point_id == p's id, and every linked feature appears in the
/// track of the point it links to.
struct SparseCloud {
  std::map<PointId, Point3D> points;
  std::map<int, std::vector<Feature>> features;

  /// Throws Errc::integrity on any dangling or one-sided link.
  void validate() const;
  /// Features observed in `view_id`, empty when the view has none.
  const std::vector<Feature>& view_features(int view_id) const;
};

enum class CameraModel { simple_pinhole, pinhole };

struct ColmapView {
  int view_id = 0;
  int camera_id = 0;
  std::string name;
  CameraModel model = CameraModel::pinhole;
  CameraIntrinsics intrinsics;
  CameraPose pose;
};

struct ColmapModel {
  SparseCloud cloud;
  std::vector<ColmapView> views;

  const ColmapView* find_view(int view_id) const;
};

enum class ColmapFormat { text, binary };

/// Loads cameras/images/points3D from `dir`, preferring the binary files when
/// both forms exist. Coordinates follow COLMAP's layout on disk (pixel centers
/// at +0.5) and are shifted to integer pixel centers in memory.
ColmapModel load_colmap_model(const std::filesystem::path& dir);

void save_colmap_model(const ColmapModel& model, const std::filesystem::path& dir,
                       ColmapFormat format);

}  // namespace segfield
