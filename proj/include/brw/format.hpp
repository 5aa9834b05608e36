#pragma once

#include <charconv>
#include <string>

namespace brw {

/// Shortest decimal text that round-trips to the same double.
inline std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace brw
