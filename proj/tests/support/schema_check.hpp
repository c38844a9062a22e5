#pragma once

// Checks a JSON document against the subset of JSON Schema used by the files
// in schemas/: type, properties, required, additionalProperties, items, enum,
// minimum, minItems, maxItems, pattern and local "#/definitions/..." refs.

#include "json.hpp"

#include <regex>
#include <string>
#include <vector>

namespace wshape::testing {

class SchemaChecker {
public:
  explicit SchemaChecker(nlohmann::json root) : root_(std::move(root)) {}

  std::vector<std::string> check(const nlohmann::json& doc) const {
    std::vector<std::string> errors;
    check(doc, root_, "$", errors);
    return errors;
  }

private:
  static bool type_matches(const nlohmann::json& v, const std::string& type) {
    if (type == "object") return v.is_object();
    if (type == "array") return v.is_array();
    if (type == "string") return v.is_string();
    if (type == "integer") return v.is_number_integer();
    if (type == "number") return v.is_number();
    if (type == "boolean") return v.is_boolean();
    if (type == "null") return v.is_null();
    return false;
  }

  const nlohmann::json& resolve(const nlohmann::json& schema) const {
    if (!schema.contains("$ref")) return schema;
    const auto ref = schema.at("$ref").get<std::string>();
    const std::string prefix = "#/definitions/";
    return root_.at("definitions").at(ref.substr(prefix.size()));
  }

  void check(const nlohmann::json& v, const nlohmann::json& raw, const std::string& at,
             std::vector<std::string>& errors) const {
    const nlohmann::json& s = resolve(raw);
    if (s.contains("type")) {
      bool ok = false;
      if (s["type"].is_array()) {
        for (const auto& t : s["type"]) ok = ok || type_matches(v, t.get<std::string>());
      } else {
        ok = type_matches(v, s["type"].get<std::string>());
      }
      if (!ok) {
        errors.push_back(at + ": expected type " + s["type"].dump());
        return;
      }
    }
    if (s.contains("enum")) {
      bool found = false;
      for (const auto& e : s["enum"]) found = found || e == v;
      if (!found) errors.push_back(at + ": value " + v.dump() + " not in enum");
    }
    if (s.contains("minimum") && v.is_number() && v.get<double>() < s["minimum"].get<double>()) {
      errors.push_back(at + ": below minimum");
    }
    if (s.contains("pattern") && v.is_string() &&
        !std::regex_search(v.get<std::string>(), std::regex(s["pattern"].get<std::string>()))) {
      errors.push_back(at + ": does not match pattern");
    }
    if (v.is_object()) {
      for (const auto& key : s.value("required", nlohmann::json::array())) {
        if (!v.contains(key.get<std::string>())) errors.push_back(at + ": missing " + key.get<std::string>());
      }
      const auto props = s.value("properties", nlohmann::json::object());
      for (const auto& [key, value] : v.items()) {
        if (props.contains(key)) {
          check(value, props[key], at + "." + key, errors);
        } else if (s.contains("additionalProperties")) {
          const auto& extra = s["additionalProperties"];
          if (extra.is_boolean()) {
            if (!extra.get<bool>()) errors.push_back(at + ": unexpected property " + key);
          } else {
            check(value, extra, at + "." + key, errors);
          }
        }
      }
    }
    if (v.is_array()) {
      if (s.contains("minItems") && v.size() < s["minItems"].get<std::size_t>()) errors.push_back(at + ": too few items");
      if (s.contains("maxItems") && v.size() > s["maxItems"].get<std::size_t>()) errors.push_back(at + ": too many items");
      if (s.contains("items")) {
        for (std::size_t i = 0; i < v.size(); ++i) check(v[i], s["items"], at + "[" + std::to_string(i) + "]", errors);
      }
    }
  }

  nlohmann::json root_;
};

} // namespace wshape::testing
