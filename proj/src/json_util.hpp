#pragma once

// Internal helpers shared by the JSON readers/writers.

#include "inml/error.hpp"
#include "inml/model.hpp"
#include "inml/numeric.hpp"

#include <json.hpp>

#include <string>

namespace inml::detail {

using json = nlohmann::json;

inline const json& require(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object()) throw SchemaError(where + ": expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw SchemaError(where + ": missing field '" + key + "'");
  return *it;
}

inline std::int64_t get_int(const json& v, const std::string& where) {
  if (!v.is_number_integer()) throw SchemaError(where + ": expected an integer");
  return v.get<std::int64_t>();
}

inline std::uint64_t get_uint(const json& v, const std::string& where) {
  if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0))
    throw SchemaError(where + ": expected a non-negative integer");
  return v.get<std::uint64_t>();
}

inline std::string get_string(const json& v, const std::string& where) {
  if (!v.is_string()) throw SchemaError(where + ": expected a string");
  return v.get<std::string>();
}

inline Rational get_rational(const json& v, const std::string& where) {
  if (v.is_string()) {
    try {
      return parse_rational(v.get<std::string>());
    } catch (const SchemaError& e) {
      throw SchemaError(where + ": " + e.what());
    }
  }
  if (v.is_number_integer()) return Rational(BigInt(v.dump()));
  if (v.is_number_float()) return parse_rational(v.dump());
  throw SchemaError(where + ": expected a rational (decimal string)");
}

inline json rational_json(const Rational& r) { return format_rational(r); }

FeatureSpec parse_feature_json(const json& j, const std::string& where);
json feature_to_json(const FeatureSpec& f);

}  // namespace inml::detail
