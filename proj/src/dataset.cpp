#include "segfield/dataset.hpp"

#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "segfield/error.hpp"
#include "segfield/image_io.hpp"
#include "segfield/json_util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace segfield {

namespace {

CameraIntrinsics parse_intrinsics(const json& j) {
  json_util::check_keys(j, {"fx", "fy", "cx", "cy", "width", "height"}, "intrinsics");
  CameraIntrinsics k;
  k.fx = j.at("fx").get<double>();
  k.fy = j.at("fy").get<double>();
  k.cx = j.at("cx").get<double>();
  k.cy = j.at("cy").get<double>();
  k.width = j.at("width").get<int>();
  k.height = j.at("height").get<int>();
  k.validate();
  return k;
}

json dump_intrinsics(const CameraIntrinsics& k) {
  return {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy},
          {"width", k.width}, {"height", k.height}};
}

CameraPose parse_pose(const json& j) {
  json_util::check_keys(j, {"rotation", "translation"}, "pose");
  CameraPose pose;
  pose.rotation = json_util::mat3(j.at("rotation"));
  pose.translation = json_util::vec3(j.at("translation"));
  pose.validate();
  return pose;
}

json dump_pose(const CameraPose& pose) {
  return {{"rotation", json_util::to_json(pose.rotation)},
          {"translation", json_util::to_json(pose.translation)}};
}

}  // namespace

DatasetManifest read_manifest(const fs::path& path) {
  const json j = json_util::read_file(path);
  try {
    json_util::check_keys(j, {"version", "pose_source", "colmap_dir", "depth_scale", "labels",
                              "views"},
                          "manifest");
    DatasetManifest m;
    m.version = j.value("version", 1);
    if (m.version != 1) {
      throw Error(Errc::parse, "unsupported manifest version " + std::to_string(m.version));
    }
    const std::string source = j.value("pose_source", std::string("manifest"));
    if (source == "manifest") {
      m.pose_source = PoseSource::manifest;
    } else if (source == "colmap") {
      m.pose_source = PoseSource::colmap;
    } else {
      throw Error(Errc::parse, "pose_source must be 'manifest' or 'colmap'");
    }
    m.colmap_dir = j.value("colmap_dir", std::string("sparse"));
    m.depth_scale = j.value("depth_scale", 0.001);
    if (!(m.depth_scale > 0.0)) throw Error(Errc::parse, "depth_scale must be positive");
    if (j.contains("labels")) m.labels = j.at("labels").get<std::map<std::string, int>>();
    std::set<int> ids;
    for (const auto& jv : j.at("views")) {
      json_util::check_keys(jv, {"view_id", "image", "depth", "instance", "intrinsics", "pose"},
                            "manifest view");
      ManifestView v;
      v.view_id = jv.at("view_id").get<int>();
      if (!ids.insert(v.view_id).second) {
        throw Error(Errc::integrity, "duplicate view_id " + std::to_string(v.view_id));
      }
      v.image = jv.at("image").get<std::string>();
      if (jv.contains("depth")) v.depth = jv.at("depth").get<std::string>();
      if (jv.contains("instance")) v.instance = jv.at("instance").get<std::string>();
      if (jv.contains("intrinsics")) v.intrinsics = parse_intrinsics(jv.at("intrinsics"));
      if (jv.contains("pose")) v.pose = parse_pose(jv.at("pose"));
      const bool has_camera = v.intrinsics.has_value() || v.pose.has_value();
      if (m.pose_source == PoseSource::colmap && has_camera) {
        throw Error(Errc::integrity, "view " + std::to_string(v.view_id) +
                                         " carries a camera but pose_source is colmap");
      }
      if (m.pose_source == PoseSource::manifest && !(v.intrinsics && v.pose)) {
        throw Error(Errc::integrity, "view " + std::to_string(v.view_id) +
                                         " lacks intrinsics/pose but pose_source is manifest");
      }
      m.views.push_back(std::move(v));
    }
    return m;
  } catch (const json::exception& e) {
    throw Error(Errc::parse, path.string() + ": " + e.what());
  }
}

void write_manifest(const fs::path& path, const DatasetManifest& m) {
  json j;
  j["version"] = m.version;
  j["pose_source"] = m.pose_source == PoseSource::manifest ? "manifest" : "colmap";
  j["colmap_dir"] = m.colmap_dir.generic_string();
  j["depth_scale"] = m.depth_scale;
  j["labels"] = m.labels;
  j["views"] = json::array();
  for (const auto& v : m.views) {
    json jv;
    jv["view_id"] = v.view_id;
    jv["image"] = v.image.generic_string();
    if (v.depth) jv["depth"] = v.depth->generic_string();
    if (v.instance) jv["instance"] = v.instance->generic_string();
    if (v.intrinsics) jv["intrinsics"] = dump_intrinsics(*v.intrinsics);
    if (v.pose) jv["pose"] = dump_pose(*v.pose);
    j["views"].push_back(std::move(jv));
  }
  json_util::write_file(path, j);
}

const ViewImage& Dataset::view(int view_id) const {
  for (const auto& v : views) {
    if (v.view_id == view_id) return v;
  }
  throw Error(Errc::integrity, "no view with id " + std::to_string(view_id));
}

Dataset load_dataset(const fs::path& manifest_path) {
  Dataset ds;
  ds.root = manifest_path.parent_path();
  ds.manifest = read_manifest(manifest_path);
  ds.colmap = load_colmap_model(ds.root / ds.manifest.colmap_dir);

  for (const auto& mv : ds.manifest.views) {
    ViewImage view;
    view.view_id = mv.view_id;
    view.name = mv.image.filename().string();
    const ColmapView* cv = ds.colmap.find_view(mv.view_id);
    if (ds.manifest.pose_source == PoseSource::colmap) {
      if (!cv) {
        throw Error(Errc::integrity,
                    "view " + std::to_string(mv.view_id) + " missing from the COLMAP model");
      }
      view.intrinsics = cv->intrinsics;
      view.pose = cv->pose;
    } else {
      view.intrinsics = *mv.intrinsics;
      view.pose = *mv.pose;
    }
    view.rgb = read_rgb_png(ds.root / mv.image);
    if (mv.depth) view.depth = read_depth_png(ds.root / *mv.depth, ds.manifest.depth_scale);
    view.validate();
    if (mv.instance) {
      auto ids = read_instance_png(ds.root / *mv.instance);
      if (!ids.same_shape(view.intrinsics.width, view.intrinsics.height)) {
        throw Error(Errc::dimension_mismatch,
                    "instance map of view " + std::to_string(mv.view_id) + " has wrong size");
      }
      ds.instances.emplace(mv.view_id, std::move(ids));
    }
    ds.views.push_back(std::move(view));
  }
  for (const auto& [view_id, list] : ds.colmap.cloud.features) {
    bool known = false;
    for (const auto& v : ds.views) known = known || v.view_id == view_id;
    if (!known) {
      throw Error(Errc::integrity,
                  "COLMAP features reference view " + std::to_string(view_id) +
                      " absent from the manifest");
    }
  }
  return ds;
}

}  // namespace segfield
