#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "segfield/colmap_io.hpp"
#include "segfield/scene_model.hpp"

namespace segfield {

/// Which source supplies camera poses and intrinsics. Exactly one is allowed
/// per dataset; a manifest view carrying a pose under `colmap` is rejected.
enum class PoseSource { manifest, colmap };

struct ManifestView {
  int view_id = 0;
  std::filesystem::path image;
  std::optional<std::filesystem::path> depth;
  std::optional<std::filesystem::path> instance;  // 16-bit instance ids (oracle backend)
  std::optional<CameraIntrinsics> intrinsics;
  std::optional<CameraPose> pose;
};

/// Dataset manifest JSON, paths relative to the manifest's directory.
struct DatasetManifest {
  int version = 1;
  PoseSource pose_source = PoseSource::manifest;
  std::filesystem::path colmap_dir = "sparse";
  double depth_scale = 0.001;  // stored depth value * depth_scale = scene units
  std::map<std::string, int> labels;  // text label -> instance id (oracle detector)
  std::vector<ManifestView> views;
};

DatasetManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

struct Dataset {
  std::filesystem::path root;
  DatasetManifest manifest;
  ColmapModel colmap;
  std::vector<ViewImage> views;
  std::map<int, InstanceMap> instances;

  const ViewImage& view(int view_id) const;
};

/// Loads the manifest, the COLMAP model and every image it references.
Dataset load_dataset(const std::filesystem::path& manifest_path);

}  // namespace segfield
