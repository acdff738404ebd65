#pragma once

#include <charconv>
#include <string>

namespace coffee {

// Shortest round-trip decimal form, so CSV output is byte-stable.
inline std::string fmt_num(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, res.ptr};
}

}  // namespace coffee
