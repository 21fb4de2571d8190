#ifndef REACHLAB_CSV_HPP_
#define REACHLAB_CSV_HPP_

#include <charconv>
#include <cmath>
#include <string>

namespace reachlab {

// Shortest decimal text that parses back to the same double.
inline std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace reachlab

#endif  // REACHLAB_CSV_HPP_
