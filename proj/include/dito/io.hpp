#pragma once

#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dito/error.hpp"

namespace dito {

/// Shortest-safe round-trip decimal: 17 significant digits.
inline std::string format_double(double value) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

using KeyValues = std::map<std::string, std::string>;

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

/// Parses flat `key=value` lines; `#` starts a comment. Duplicate keys are an error.
inline KeyValues parse_key_values(std::istream& in) {
  KeyValues out;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    std::string_view view = line;
    if (const auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
    view = trim(view);
    if (view.empty()) continue;
    const auto eq = view.find('=');
    if (eq == std::string_view::npos) {
      fail(Errc::ConfigError, "line " + std::to_string(number) + ": expected key=value");
    }
    const std::string key(trim(view.substr(0, eq)));
    const std::string value(trim(view.substr(eq + 1)));
    if (key.empty()) fail(Errc::ConfigError, "line " + std::to_string(number) + ": empty key");
    if (!out.emplace(key, value).second) fail(Errc::ConfigError, "duplicate key '" + key + "'");
  }
  return out;
}

inline void write_key_values(std::ostream& out, const KeyValues& values) {
  for (const auto& [key, value] : values) out << key << '=' << value << '\n';
}

}  // namespace dito
