#include "segfield/json_util.hpp"

#include <algorithm>
#include <fstream>

#include "segfield/error.hpp"

namespace segfield::json_util {

using nlohmann::json;

void check_keys(const json& object, std::initializer_list<std::string_view> allowed,
                std::string_view context) {
  if (!object.is_object()) {
    throw Error(Errc::parse, std::string(context) + ": expected a JSON object");
  }
  for (const auto& [key, value] : object.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw Error(Errc::parse, std::string(context) + ": unknown key '" + key + "'");
    }
  }
}

json read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(Errc::parse, path.string() + ": " + e.what());
  }
}

void write_file(const std::filesystem::path& path, const json& value) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(Errc::io, "cannot write " + path.string());
  out << value.dump(2) << "\n";
  if (!out) throw Error(Errc::io, "write failed: " + path.string());
}

void append_line(const std::filesystem::path& path, const json& value) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw Error(Errc::io, "cannot write " + path.string());
  out << value.dump() << "\n";
}

Vec3 vec3(const json& j) {
  if (!j.is_array() || j.size() != 3) throw Error(Errc::parse, "expected a 3-vector");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

Mat3 mat3(const json& j) {
  if (!j.is_array() || j.size() != 3) throw Error(Errc::parse, "expected a 3x3 matrix");
  Mat3 m;
  for (int r = 0; r < 3; ++r) m.row(r) = vec3(j[r]).transpose();
  return m;
}

json to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

json to_json(const Mat3& m) {
  json rows = json::array();
  for (int r = 0; r < 3; ++r) rows.push_back(to_json(Vec3(m.row(r).transpose())));
  return rows;
}

}  // namespace segfield::json_util
