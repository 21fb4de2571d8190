#ifndef REACHLAB_RNG_HPP_
#define REACHLAB_RNG_HPP_

#include <cstdint>
#include <random>
#include <string_view>

namespace reachlab {

using Rng = std::mt19937_64;

// Derives an independent seed for a named substream of `master`. Adding a new
// substream never shifts the draws of existing ones.
std::uint64_t substream_seed(std::uint64_t master, std::string_view name,
                             std::uint64_t index = 0);

inline Rng make_stream(std::uint64_t master, std::string_view name,
                       std::uint64_t index = 0) {
  return Rng(substream_seed(master, name, index));
}

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline double standard_normal(Rng& rng) {
  return std::normal_distribution<double>(0.0, 1.0)(rng);
}

inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

}  // namespace reachlab

#endif  // REACHLAB_RNG_HPP_
