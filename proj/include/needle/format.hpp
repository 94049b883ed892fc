#pragma once

#include <charconv>
#include <cmath>
#include <string>

namespace needle {

// Shortest round-trip decimal form; identical across runs and thread counts.
inline std::string fmt_num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) return "0";
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace needle
