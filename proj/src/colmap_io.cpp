#include "segfield/colmap_io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "segfield/error.hpp"

namespace fs = std::filesystem;

namespace segfield {

// COLMAP places pixel centers at +0.5; in memory they sit on integers.
constexpr double kHalfPixel = 0.5;
constexpr std::uint64_t kInvalidPoint = std::numeric_limits<std::uint64_t>::max();

void SparseCloud::validate() const {
  for (const auto& [id, point] : points) {
    for (const auto& obs : point.track) {
      const auto it = features.find(obs.view_id);
      if (it == features.end()) {
        throw Error(Errc::integrity, "point " + std::to_string(id) + " tracks unknown view " +
                                         std::to_string(obs.view_id));
      }
      if (obs.feature_index < 0 || obs.feature_index >= static_cast<int>(it->second.size())) {
        throw Error(Errc::integrity, "point " + std::to_string(id) + " tracks feature " +
                                         std::to_string(obs.feature_index) + " beyond view " +
                                         std::to_string(obs.view_id) + "'s feature list");
      }
      const auto& feature = it->second[obs.feature_index];
      if (feature.point_id != id) {
        throw Error(Errc::integrity, "feature " + std::to_string(obs.feature_index) + " of view " +
                                         std::to_string(obs.view_id) +
                                         " does not link back to point " + std::to_string(id));
      }
    }
  }
  for (const auto& [view_id, list] : features) {
    for (int f = 0; f < static_cast<int>(list.size()); ++f) {
      if (!list[f].point_id) continue;
      const auto pit = points.find(*list[f].point_id);
      const TrackElement expected{view_id, f};
      if (pit == points.end() ||
          std::find(pit->second.track.begin(), pit->second.track.end(), expected) ==
              pit->second.track.end()) {
        throw Error(Errc::integrity, "feature " + std::to_string(f) + " of view " +
                                         std::to_string(view_id) + " links to point " +
                                         std::to_string(*list[f].point_id) +
                                         " whose track does not contain it");
      }
    }
  }
}

const std::vector<Feature>& SparseCloud::view_features(int view_id) const {
  static const std::vector<Feature> kNone;
  const auto it = features.find(view_id);
  return it == features.end() ? kNone : it->second;
}

const ColmapView* ColmapModel::find_view(int view_id) const {
  for (const auto& view : views) {
    if (view.view_id == view_id) return &view;
  }
  return nullptr;
}

namespace {

struct CameraRecord {
  CameraModel model = CameraModel::pinhole;
  CameraIntrinsics intrinsics;
};

int model_id(CameraModel model) { return model == CameraModel::simple_pinhole ? 0 : 1; }

const char* model_name(CameraModel model) {
  return model == CameraModel::simple_pinhole ? "SIMPLE_PINHOLE" : "PINHOLE";
}

std::size_t model_param_count(CameraModel model) {
  return model == CameraModel::simple_pinhole ? 3 : 4;
}

std::vector<double> camera_params(const CameraRecord& cam) {
  const auto& k = cam.intrinsics;
  if (cam.model == CameraModel::simple_pinhole) {
    return {k.fx, k.cx + kHalfPixel, k.cy + kHalfPixel};
  }
  return {k.fx, k.fy, k.cx + kHalfPixel, k.cy + kHalfPixel};
}

CameraIntrinsics intrinsics_from(CameraModel model, const std::vector<double>& p, int width,
                                 int height) {
  CameraIntrinsics k;
  k.width = width;
  k.height = height;
  if (model == CameraModel::simple_pinhole) {
    k.fx = k.fy = p[0];
    k.cx = p[1] - kHalfPixel;
    k.cy = p[2] - kHalfPixel;
  } else {
    k.fx = p[0];
    k.fy = p[1];
    k.cx = p[2] - kHalfPixel;
    k.cy = p[3] - kHalfPixel;
  }
  return k;
}

CameraPose pose_from(double qw, double qx, double qy, double qz, double tx, double ty, double tz) {
  CameraPose pose;
  pose.rotation = Eigen::Quaterniond(qw, qx, qy, qz).normalized().toRotationMatrix();
  pose.translation = Vec3(tx, ty, tz);
  return pose;
}

Eigen::Quaterniond quaternion_from(const CameraPose& pose) {
  Eigen::Quaterniond q(pose.rotation);
  q.normalize();
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  return q;
}

std::map<int, CameraRecord> collect_cameras(const ColmapModel& model) {
  std::map<int, CameraRecord> cameras;
  for (const auto& view : model.views) {
    const CameraRecord record{view.model, view.intrinsics};
    const auto [it, inserted] = cameras.emplace(view.camera_id, record);
    if (!inserted) {
      const auto& a = it->second.intrinsics;
      const auto& b = view.intrinsics;
      if (it->second.model != view.model || a.fx != b.fx || a.fy != b.fy || a.cx != b.cx ||
          a.cy != b.cy || a.width != b.width || a.height != b.height) {
        throw Error(Errc::integrity, "views sharing camera " + std::to_string(view.camera_id) +
                                         " disagree on intrinsics");
      }
    }
  }
  return cameras;
}

void check_views_cover_cloud(const ColmapModel& model) {
  std::set<int> ids;
  for (const auto& view : model.views) {
    if (!ids.insert(view.view_id).second) {
      throw Error(Errc::integrity, "duplicate image id " + std::to_string(view.view_id));
    }
  }
  for (const auto& [view_id, list] : model.cloud.features) {
    if (!ids.count(view_id)) {
      throw Error(Errc::integrity, "features reference unknown image " + std::to_string(view_id));
    }
  }
}

// ---------------------------------------------------------------- text

[[noreturn]] void text_error(const fs::path& path, int line, const std::string& what) {
  throw Error(Errc::parse, path.string() + ":" + std::to_string(line) + ": " + what);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::ifstream open_in(const fs::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw Error(Errc::io, "cannot open " + path.string());
  return in;
}

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode | std::ios::trunc);
  if (!out) throw Error(Errc::io, "cannot write " + path.string());
  return out;
}

template <typename T>
T parse_field(std::istringstream& ss, const fs::path& path, int line, const char* name) {
  T value{};
  if (!(ss >> value)) text_error(path, line, std::string("expected ") + name);
  return value;
}

CameraModel parse_model_name(const std::string& name, const fs::path& path, int line) {
  if (name == "SIMPLE_PINHOLE") return CameraModel::simple_pinhole;
  if (name == "PINHOLE") return CameraModel::pinhole;
  throw Error(Errc::unsupported_model, path.string() + ":" + std::to_string(line) +
                                           ": unsupported camera model " + name +
                                           " (only PINHOLE and SIMPLE_PINHOLE)");
}

std::map<int, CameraRecord> read_cameras_text(const fs::path& path) {
  auto in = open_in(path);
  std::map<int, CameraRecord> cameras;
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    const int id = parse_field<int>(ss, path, line_no, "CAMERA_ID");
    const auto name = parse_field<std::string>(ss, path, line_no, "MODEL");
    const CameraModel model = parse_model_name(name, path, line_no);
    const int width = parse_field<int>(ss, path, line_no, "WIDTH");
    const int height = parse_field<int>(ss, path, line_no, "HEIGHT");
    std::vector<double> params;
    for (std::size_t i = 0; i < model_param_count(model); ++i) {
      params.push_back(parse_field<double>(ss, path, line_no, "PARAMS"));
    }
    std::string extra;
    if (ss >> extra) text_error(path, line_no, "too many camera parameters");
    cameras[id] = CameraRecord{model, intrinsics_from(model, params, width, height)};
  }
  return cameras;
}

struct ImageRecord {
  ColmapView view;
  std::vector<Feature> features;
};

std::vector<ImageRecord> read_images_text(const fs::path& path,
                                          const std::map<int, CameraRecord>& cameras) {
  auto in = open_in(path);
  std::vector<ImageRecord> images;
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    ImageRecord record;
    record.view.view_id = parse_field<int>(ss, path, line_no, "IMAGE_ID");
    double q[4], t[3];
    for (double& v : q) v = parse_field<double>(ss, path, line_no, "quaternion");
    for (double& v : t) v = parse_field<double>(ss, path, line_no, "translation");
    record.view.camera_id = parse_field<int>(ss, path, line_no, "CAMERA_ID");
    record.view.name = parse_field<std::string>(ss, path, line_no, "NAME");
    const auto cam = cameras.find(record.view.camera_id);
    if (cam == cameras.end()) {
      throw Error(Errc::integrity, path.string() + ":" + std::to_string(line_no) +
                                       ": unknown camera " +
                                       std::to_string(record.view.camera_id));
    }
    record.view.model = cam->second.model;
    record.view.intrinsics = cam->second.intrinsics;
    record.view.pose = pose_from(q[0], q[1], q[2], q[3], t[0], t[1], t[2]);

    // The observation line always follows, possibly empty.
    std::string points_line;
    if (!std::getline(in, points_line)) text_error(path, line_no + 1, "missing POINTS2D line");
    ++line_no;
    std::istringstream ps(points_line);
    double x = 0, y = 0;
    long long pid = 0;
    while (ps >> x) {
      if (!(ps >> y >> pid)) text_error(path, line_no, "incomplete (X, Y, POINT3D_ID) triple");
      Feature f;
      f.uv = Vec2(x - kHalfPixel, y - kHalfPixel);
      if (pid >= 0) f.point_id = pid;
      record.features.push_back(f);
    }
    if (!ps.eof()) text_error(path, line_no, "malformed POINTS2D entry");
    images.push_back(std::move(record));
  }
  return images;
}

std::map<PointId, Point3D> read_points_text(const fs::path& path) {
  auto in = open_in(path);
  std::map<PointId, Point3D> points;
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    const auto id = parse_field<long long>(ss, path, line_no, "POINT3D_ID");
    Point3D p;
    for (int i = 0; i < 3; ++i) p.xyz[i] = parse_field<double>(ss, path, line_no, "XYZ");
    for (int i = 0; i < 3; ++i) {
      const int c = parse_field<int>(ss, path, line_no, "RGB");
      if (c < 0 || c > 255) text_error(path, line_no, "color component out of range");
      p.rgb[i] = static_cast<std::uint8_t>(c);
    }
    p.error = parse_field<double>(ss, path, line_no, "ERROR");
    int image_id = 0;
    while (ss >> image_id) {
      int idx = 0;
      if (!(ss >> idx)) text_error(path, line_no, "incomplete (IMAGE_ID, POINT2D_IDX) pair");
      p.track.push_back({image_id, idx});
    }
    if (!ss.eof()) text_error(path, line_no, "malformed TRACK entry");
    if (!points.emplace(id, std::move(p)).second) {
      text_error(path, line_no, "duplicate point id " + std::to_string(id));
    }
  }
  return points;
}

void write_cameras_text(const fs::path& path, const std::map<int, CameraRecord>& cameras) {
  auto out = open_out(path);
  out.precision(17);
  out << "# Camera list with one line of data per camera:\n";
  out << "#   CAMERA_ID, MODEL, WIDTH, HEIGHT, PARAMS[]\n";
  out << "# Number of cameras: " << cameras.size() << "\n";
  for (const auto& [id, cam] : cameras) {
    out << id << " " << model_name(cam.model) << " " << cam.intrinsics.width << " "
        << cam.intrinsics.height;
    for (double p : camera_params(cam)) out << " " << p;
    out << "\n";
  }
}

void write_images_text(const fs::path& path, const ColmapModel& model) {
  auto out = open_out(path);
  out.precision(17);
  std::size_t observations = 0;
  for (const auto& [view_id, list] : model.cloud.features) {
    observations += static_cast<std::size_t>(
        std::count_if(list.begin(), list.end(), [](const Feature& f) { return f.point_id; }));
  }
  const double mean =
      model.views.empty() ? 0.0 : static_cast<double>(observations) / model.views.size();
  out << "# Image list with two lines of data per image:\n";
  out << "#   IMAGE_ID, QW, QX, QY, QZ, TX, TY, TZ, CAMERA_ID, NAME\n";
  out << "#   POINTS2D[] as (X, Y, POINT3D_ID)\n";
  out << "# Number of images: " << model.views.size()
      << ", mean observations per image: " << mean << "\n";
  for (const auto& view : model.views) {
    const auto q = quaternion_from(view.pose);
    const auto& t = view.pose.translation;
    out << view.view_id << " " << q.w() << " " << q.x() << " " << q.y() << " " << q.z() << " "
        << t.x() << " " << t.y() << " " << t.z() << " " << view.camera_id << " " << view.name
        << "\n";
    bool first = true;
    for (const auto& f : model.cloud.view_features(view.view_id)) {
      if (!first) out << " ";
      first = false;
      out << f.uv.x() + kHalfPixel << " " << f.uv.y() + kHalfPixel << " "
          << (f.point_id ? *f.point_id : -1);
    }
    out << "\n";
  }
}

void write_points_text(const fs::path& path, const SparseCloud& cloud) {
  auto out = open_out(path);
  out.precision(17);
  std::size_t track_total = 0;
  for (const auto& [id, p] : cloud.points) track_total += p.track.size();
  const double mean =
      cloud.points.empty() ? 0.0 : static_cast<double>(track_total) / cloud.points.size();
  out << "# 3D point list with one line of data per point:\n";
  out << "#   POINT3D_ID, X, Y, Z, R, G, B, ERROR, TRACK[] as (IMAGE_ID, POINT2D_IDX)\n";
  out << "# Number of points: " << cloud.points.size() << ", mean track length: " << mean << "\n";
  for (const auto& [id, p] : cloud.points) {
    out << id << " " << p.xyz.x() << " " << p.xyz.y() << " " << p.xyz.z() << " "
        << static_cast<int>(p.rgb[0]) << " " << static_cast<int>(p.rgb[1]) << " "
        << static_cast<int>(p.rgb[2]) << " " << p.error;
    for (const auto& obs : p.track) out << " " << obs.view_id << " " << obs.feature_index;
    out << "\n";
  }
}

// ---------------------------------------------------------------- binary

class BinaryReader {
 public:
  explicit BinaryReader(const fs::path& path) : path_(path) {
    auto in = open_in(path, std::ios::binary);
    bytes_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }

  template <typename T>
  T read(const char* what) {
    if (offset_ + sizeof(T) > bytes_.size()) fail(std::string("truncated while reading ") + what);
    T value;
    std::memcpy(&value, bytes_.data() + offset_, sizeof(T));
    offset_ += sizeof(T);
    return value;
  }

  std::string read_cstring(const char* what) {
    std::string s;
    for (;;) {
      if (offset_ >= bytes_.size()) fail(std::string("unterminated ") + what);
      const char c = bytes_[offset_++];
      if (c == '\0') break;
      s.push_back(c);
    }
    return s;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw Error(Errc::parse, path_.string() + ": offset " + std::to_string(offset_) + ": " + what);
  }

  std::size_t offset() const { return offset_; }
  bool at_end() const { return offset_ == bytes_.size(); }

 private:
  fs::path path_;
  std::vector<char> bytes_;
  std::size_t offset_ = 0;
};

static_assert(std::endian::native == std::endian::little,
              "binary COLMAP I/O assumes a little-endian host");

class BinaryWriter {
 public:
  explicit BinaryWriter(const fs::path& path) : out_(open_out(path, std::ios::binary)), path_(path) {}

  template <typename T>
  void write(T value) {
    out_.write(reinterpret_cast<const char*>(&value), sizeof(T));
  }
  void write_cstring(const std::string& s) { out_.write(s.c_str(), s.size() + 1); }
  void finish() {
    out_.flush();
    if (!out_) throw Error(Errc::io, "write failed: " + path_.string());
  }

 private:
  std::ofstream out_;
  fs::path path_;
};

std::map<int, CameraRecord> read_cameras_binary(const fs::path& path) {
  BinaryReader r(path);
  std::map<int, CameraRecord> cameras;
  const auto n = r.read<std::uint64_t>("camera count");
  for (std::uint64_t i = 0; i < n; ++i) {
    const auto id = r.read<std::uint32_t>("camera id");
    const auto mid = r.read<std::int32_t>("model id");
    if (mid != 0 && mid != 1) {
      throw Error(Errc::unsupported_model,
                  path.string() + ": offset " + std::to_string(r.offset()) +
                      ": unsupported camera model id " + std::to_string(mid) +
                      " (only PINHOLE and SIMPLE_PINHOLE)");
    }
    const CameraModel model = mid == 0 ? CameraModel::simple_pinhole : CameraModel::pinhole;
    const auto width = r.read<std::uint64_t>("width");
    const auto height = r.read<std::uint64_t>("height");
    std::vector<double> params;
    for (std::size_t k = 0; k < model_param_count(model); ++k) {
      params.push_back(r.read<double>("camera params"));
    }
    cameras[static_cast<int>(id)] = CameraRecord{
        model, intrinsics_from(model, params, static_cast<int>(width), static_cast<int>(height))};
  }
  if (!r.at_end()) r.fail("trailing bytes");
  return cameras;
}

std::vector<ImageRecord> read_images_binary(const fs::path& path,
                                            const std::map<int, CameraRecord>& cameras) {
  BinaryReader r(path);
  std::vector<ImageRecord> images;
  const auto n = r.read<std::uint64_t>("image count");
  for (std::uint64_t i = 0; i < n; ++i) {
    ImageRecord record;
    record.view.view_id = static_cast<int>(r.read<std::uint32_t>("image id"));
    double q[4], t[3];
    for (double& v : q) v = r.read<double>("quaternion");
    for (double& v : t) v = r.read<double>("translation");
    record.view.camera_id = static_cast<int>(r.read<std::uint32_t>("camera id"));
    record.view.name = r.read_cstring("image name");
    const auto cam = cameras.find(record.view.camera_id);
    if (cam == cameras.end()) {
      throw Error(Errc::integrity, path.string() + ": image " +
                                       std::to_string(record.view.view_id) +
                                       " references unknown camera " +
                                       std::to_string(record.view.camera_id));
    }
    record.view.model = cam->second.model;
    record.view.intrinsics = cam->second.intrinsics;
    record.view.pose = pose_from(q[0], q[1], q[2], q[3], t[0], t[1], t[2]);
    const auto m = r.read<std::uint64_t>("point2D count");
    for (std::uint64_t k = 0; k < m; ++k) {
      Feature f;
      const double x = r.read<double>("point2D x");
      const double y = r.read<double>("point2D y");
      const auto pid = r.read<std::uint64_t>("point2D point id");
      f.uv = Vec2(x - kHalfPixel, y - kHalfPixel);
      if (pid != kInvalidPoint) f.point_id = static_cast<PointId>(pid);
      record.features.push_back(f);
    }
    images.push_back(std::move(record));
  }
  if (!r.at_end()) r.fail("trailing bytes");
  return images;
}

std::map<PointId, Point3D> read_points_binary(const fs::path& path) {
  BinaryReader r(path);
  std::map<PointId, Point3D> points;
  const auto n = r.read<std::uint64_t>("point count");
  for (std::uint64_t i = 0; i < n; ++i) {
    const auto id = static_cast<PointId>(r.read<std::uint64_t>("point id"));
    Point3D p;
    for (int k = 0; k < 3; ++k) p.xyz[k] = r.read<double>("xyz");
    for (int k = 0; k < 3; ++k) p.rgb[k] = r.read<std::uint8_t>("rgb");
    p.error = r.read<double>("error");
    const auto len = r.read<std::uint64_t>("track length");
    for (std::uint64_t k = 0; k < len; ++k) {
      const auto image_id = r.read<std::uint32_t>("track image id");
      const auto idx = r.read<std::uint32_t>("track point2D index");
      p.track.push_back({static_cast<int>(image_id), static_cast<int>(idx)});
    }
    if (!points.emplace(id, std::move(p)).second) {
      r.fail("duplicate point id " + std::to_string(id));
    }
  }
  if (!r.at_end()) r.fail("trailing bytes");
  return points;
}

void write_cameras_binary(const fs::path& path, const std::map<int, CameraRecord>& cameras) {
  BinaryWriter w(path);
  w.write<std::uint64_t>(cameras.size());
  for (const auto& [id, cam] : cameras) {
    w.write<std::uint32_t>(static_cast<std::uint32_t>(id));
    w.write<std::int32_t>(model_id(cam.model));
    w.write<std::uint64_t>(static_cast<std::uint64_t>(cam.intrinsics.width));
    w.write<std::uint64_t>(static_cast<std::uint64_t>(cam.intrinsics.height));
    for (double p : camera_params(cam)) w.write<double>(p);
  }
  w.finish();
}

void write_images_binary(const fs::path& path, const ColmapModel& model) {
  BinaryWriter w(path);
  w.write<std::uint64_t>(model.views.size());
  for (const auto& view : model.views) {
    w.write<std::uint32_t>(static_cast<std::uint32_t>(view.view_id));
    const auto q = quaternion_from(view.pose);
    w.write<double>(q.w());
    w.write<double>(q.x());
    w.write<double>(q.y());
    w.write<double>(q.z());
    for (int k = 0; k < 3; ++k) w.write<double>(view.pose.translation[k]);
    w.write<std::uint32_t>(static_cast<std::uint32_t>(view.camera_id));
    w.write_cstring(view.name);
    const auto& features = model.cloud.view_features(view.view_id);
    w.write<std::uint64_t>(features.size());
    for (const auto& f : features) {
      w.write<double>(f.uv.x() + kHalfPixel);
      w.write<double>(f.uv.y() + kHalfPixel);
      w.write<std::uint64_t>(f.point_id ? static_cast<std::uint64_t>(*f.point_id) : kInvalidPoint);
    }
  }
  w.finish();
}

void write_points_binary(const fs::path& path, const SparseCloud& cloud) {
  BinaryWriter w(path);
  w.write<std::uint64_t>(cloud.points.size());
  for (const auto& [id, p] : cloud.points) {
    w.write<std::uint64_t>(static_cast<std::uint64_t>(id));
    for (int k = 0; k < 3; ++k) w.write<double>(p.xyz[k]);
    for (int k = 0; k < 3; ++k) w.write<std::uint8_t>(p.rgb[k]);
    w.write<double>(p.error);
    w.write<std::uint64_t>(p.track.size());
    for (const auto& obs : p.track) {
      w.write<std::uint32_t>(static_cast<std::uint32_t>(obs.view_id));
      w.write<std::uint32_t>(static_cast<std::uint32_t>(obs.feature_index));
    }
  }
  w.finish();
}

}  // namespace

ColmapModel load_colmap_model(const fs::path& dir) {
  const bool binary = fs::exists(dir / "cameras.bin") && fs::exists(dir / "images.bin") &&
                      fs::exists(dir / "points3D.bin");
  const bool text = fs::exists(dir / "cameras.txt") && fs::exists(dir / "images.txt") &&
                    fs::exists(dir / "points3D.txt");
  if (!binary && !text) {
    throw Error(Errc::io, "no COLMAP model (cameras/images/points3D) in " + dir.string());
  }
  std::map<int, CameraRecord> cameras;
  std::vector<ImageRecord> images;
  std::map<PointId, Point3D> points;
  if (binary) {
    cameras = read_cameras_binary(dir / "cameras.bin");
    images = read_images_binary(dir / "images.bin", cameras);
    points = read_points_binary(dir / "points3D.bin");
  } else {
    cameras = read_cameras_text(dir / "cameras.txt");
    images = read_images_text(dir / "images.txt", cameras);
    points = read_points_text(dir / "points3D.txt");
  }

  ColmapModel model;
  model.cloud.points = std::move(points);
  for (auto& record : images) {
    if (!record.features.empty()) {
      model.cloud.features[record.view.view_id] = std::move(record.features);
    }
    model.views.push_back(std::move(record.view));
  }
  check_views_cover_cloud(model);
  model.cloud.validate();
  return model;
}

void save_colmap_model(const ColmapModel& model, const fs::path& dir, ColmapFormat format) {
  check_views_cover_cloud(model);
  model.cloud.validate();
  const auto cameras = collect_cameras(model);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(Errc::io, "cannot create " + dir.string() + ": " + ec.message());
  if (format == ColmapFormat::text) {
    write_cameras_text(dir / "cameras.txt", cameras);
    write_images_text(dir / "images.txt", model);
    write_points_text(dir / "points3D.txt", model.cloud);
  } else {
    write_cameras_binary(dir / "cameras.bin", cameras);
    write_images_binary(dir / "images.bin", model);
    write_points_binary(dir / "points3D.bin", model.cloud);
  }
}

}  // namespace segfield
