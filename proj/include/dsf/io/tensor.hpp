#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "dsf/core/plane.hpp"

namespace dsf {

/// Minimal binary tensor container:
///   magic "DSF1" | dtype u8 (1 = f32, 2 = f64) | ndim u8 |
///   ndim x u32 dims (little-endian) | row-major payload (little-endian).
/// write -> read round-trips are bitwise identities.
struct Tensor {
  std::uint8_t dtype = 1;
  std::vector<std::uint32_t> dims;
  std::vector<float> f32;
  std::vector<double> f64;

  std::size_t element_count() const {
    std::size_t n = 1;
    for (std::uint32_t d : dims) n *= d;
    return n;
  }
};

void write_tensor(const Tensor& t, const std::filesystem::path& path);
Tensor read_tensor(const std::filesystem::path& path);

Tensor tensor_from_plane(const Plane<float>& p);
Tensor tensor_from_plane(const Plane<double>& p);

/// Stacks planes as one (n, H, W) tensor.
Tensor tensor_from_planes(const std::vector<Plane<float>>& planes);

Plane<float> plane_from_tensor(const Tensor& t);  // requires ndim == 2, dtype f32

}  // namespace dsf
