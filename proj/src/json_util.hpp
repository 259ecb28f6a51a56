#pragma once

// Field-path aware accessors shared by the JSON readers.

#include <string>
#include <type_traits>
#include <vector>

#include "ioumatch/geometry.hpp"
#include "ioumatch/synth_data.hpp"

namespace ioumatch::detail {

inline const Json& require(const Json& obj, const char* key, const std::string& path) {
  if (!obj.is_object()) throw ParseError(path + ": expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(path + ": missing key \"" + key + "\"");
  return *it;
}

inline double number_at(const Json& j, const std::string& path) {
  if (!j.is_number()) throw ParseError(path + ": expected a number");
  return j.get<double>();
}

inline Vec3 vec3_at(const Json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 3) throw ParseError(path + ": expected 3 numbers");
  return {number_at(j[0], path + "[0]"), number_at(j[1], path + "[1]"),
          number_at(j[2], path + "[2]")};
}

inline Json vec3_to_json(const Vec3& v) { return Json::array({v.x(), v.y(), v.z()}); }

inline std::vector<double> numbers_at(const Json& j, const std::string& path) {
  if (!j.is_array()) throw ParseError(path + ": expected an array of numbers");
  std::vector<double> out;
  out.reserve(j.size());
  for (std::size_t i = 0; i < j.size(); ++i)
    out.push_back(number_at(j[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

template <typename T>
void read_optional(const Json& obj, const char* key, const std::string& path, T& out) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  const std::string field = path + "." + key;
  if constexpr (std::is_same_v<T, bool>) {
    if (!it->is_boolean()) throw ParseError(field + ": expected a boolean");
  } else if constexpr (std::is_integral_v<T>) {
    if (!it->is_number_integer()) throw ParseError(field + ": expected an integer");
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!it->is_number()) throw ParseError(field + ": expected a number");
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!it->is_string()) throw ParseError(field + ": expected a string");
  }
  out = it->get<T>();
}

}  // namespace ioumatch::detail
