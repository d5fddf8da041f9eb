// Internal helpers for deterministic text round trips of numeric fields.
#pragma once

#include <charconv>
#include <string>
#include <string_view>

#include "cellscreen/errors.hpp"

namespace cellscreen::detail {

// Shortest representation that parses back to the identical double.
inline void append_double(std::string& out, double value) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, value);
  out.append(buf, res.ptr);
}

// 12 significant digits: parses back within 5e-12 relative, at roughly half
// the bytes of the exact form for full-entropy doubles.
inline void append_double_12(std::string& out, double value) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, value,
                           std::chars_format::general, 12);
  out.append(buf, res.ptr);
}

inline std::string format_double(double value) {
  std::string s;
  append_double(s, value);
  return s;
}

inline double parse_double(std::string_view field, std::size_t row,
                           const char* what) {
  double value = 0.0;
  auto res = std::from_chars(field.data(), field.data() + field.size(), value);
  if (res.ec != std::errc() || res.ptr != field.data() + field.size()) {
    throw format_error(std::string("cannot parse ") + what + " from '" +
                           std::string(field) + "'",
                       row);
  }
  return value;
}

}  // namespace cellscreen::detail
