#pragma once

#include <cstdint>

#include "dsf/core/plane.hpp"

namespace dsf {

/// splitmix64 generator. Used everywhere randomness is needed so that
/// sequences are bit-identical across platforms and standard libraries
/// (std::uniform_*_distribution is implementation-defined).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0,1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform double in [lo,hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Unbiased-enough integer in [0,n). Fixed-point multiply keeps the
  /// mapping independent of the standard library.
  std::uint64_t bounded(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

 private:
  std::uint64_t state_;
};

template <typename Scalar>
Plane<Scalar> random_plane(Eigen::Index rows, Eigen::Index cols, Rng& rng,
                           double lo = 0.0, double hi = 1.0) {
  Plane<Scalar> p(rows, cols);
  for (Eigen::Index y = 0; y < rows; ++y)
    for (Eigen::Index x = 0; x < cols; ++x)
      p(y, x) = static_cast<Scalar>(rng.uniform(lo, hi));
  return p;
}

}  // namespace dsf
