#pragma once

#include <filesystem>
#include <initializer_list>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "segfield/scene_model.hpp"

namespace segfield::json_util {

/// Rejects keys of `object` outside `allowed`.
void check_keys(const nlohmann::json& object, std::initializer_list<std::string_view> allowed,
                std::string_view context);

nlohmann::json read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const nlohmann::json& value);
/// Appends one compact JSON value per line.
void append_line(const std::filesystem::path& path, const nlohmann::json& value);

Vec3 vec3(const nlohmann::json& j);
Mat3 mat3(const nlohmann::json& j);
nlohmann::json to_json(const Vec3& v);
nlohmann::json to_json(const Mat3& m);

}  // namespace segfield::json_util
