#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "basketgen/tensor.hpp"

namespace basketgen {

// All randomness in the pipeline flows from one root seed through named
// sub-streams, so stages can be rerun independently with stable results.

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t sub_seed(std::uint64_t root, std::string_view stream) {
  return splitmix64(root ^ fnv1a(stream));
}

inline std::mt19937_64 make_rng(std::uint64_t root, std::string_view stream) {
  return std::mt19937_64(sub_seed(root, stream));
}

// Scaled uniform init, +-sqrt(6 / (fan_in + fan_out)).
inline void init_glorot(Tensor& t, std::size_t fan_in, std::size_t fan_out,
                        std::mt19937_64& rng) {
  double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (auto& x : t.v) x = u(rng);
}

inline Tensor random_normal(std::vector<std::size_t> shape, std::mt19937_64& rng,
                            double mean = 0.0, double stddev = 1.0) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> n(mean, stddev);
  for (auto& x : t.v) x = n(rng);
  return t;
}

}  // namespace basketgen
