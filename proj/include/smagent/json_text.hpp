#pragma once

#include <cstddef>
#include <optional>
#include <string_view>

#include "json.hpp"

namespace smagent {

/// Finds the first balanced JSON object (open = '{') or array (open = '[')
/// embedded in free text that parses successfully.
inline std::optional<nlohmann::json> first_json(std::string_view text, char open) {
  const char close = open == '{' ? '}' : ']';
  for (std::size_t start = text.find(open); start != std::string_view::npos; start = text.find(open, start + 1)) {
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = start; i < text.size(); ++i) {
      const char c = text[i];
      if (in_string) {
        if (escaped) escaped = false;
        else if (c == '\\') escaped = true;
        else if (c == '"') in_string = false;
        continue;
      }
      if (c == '"') {
        in_string = true;
      } else if (c == '{' || c == '[') {
        ++depth;
      } else if (c == '}' || c == ']') {
        if (--depth == 0) {
          if (c != close) break;
          auto parsed = nlohmann::json::parse(text.substr(start, i - start + 1), nullptr, false);
          if (!parsed.is_discarded()) return parsed;
          break;
        }
      }
    }
  }
  return std::nullopt;
}

}  // namespace smagent
