#pragma once

#include <string>

#include "json.hpp"

namespace osg::detail {

// Single-line JSON with ": " and ", " separators, the form prompts quote.
inline void write_compact(const nlohmann::ordered_json& value, std::string& out) {
  if (value.is_object()) {
    out += '{';
    bool first = true;
    for (const auto& [key, item] : value.items()) {
      if (!first) out += ", ";
      first = false;
      out += nlohmann::ordered_json(key).dump();
      out += ": ";
      write_compact(item, out);
    }
    out += '}';
  } else if (value.is_array()) {
    out += '[';
    bool first = true;
    for (const auto& item : value) {
      if (!first) out += ", ";
      first = false;
      write_compact(item, out);
    }
    out += ']';
  } else {
    out += value.dump();
  }
}

inline std::string compact(const nlohmann::ordered_json& value) {
  std::string out;
  write_compact(value, out);
  return out;
}

}  // namespace osg::detail
