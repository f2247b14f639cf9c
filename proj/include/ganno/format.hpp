#pragma once

#include <charconv>
#include <cstdio>
#include <string>

namespace ganno {

// Shortest text that round-trips a double exactly.
inline std::string exact(double value) {
  char buf[40];
  const auto r = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, r.ptr);
}

inline std::string fixed(double value, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, value);
  return buf;
}

}  // namespace ganno
