#include "dsf/io/tensor.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace dsf {

namespace {

constexpr char kMagic[4] = {'D', 'S', 'F', '1'};

void put_u32_le(std::vector<unsigned char>& out, std::uint32_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xff));
  out.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
  out.push_back(static_cast<unsigned char>((v >> 16) & 0xff));
  out.push_back(static_cast<unsigned char>((v >> 24) & 0xff));
}

std::uint32_t get_u32_le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

template <typename T, typename U>
void put_scalar_le(std::vector<unsigned char>& out, T v) {
  const U bits = std::bit_cast<U>(v);
  for (unsigned i = 0; i < sizeof(U); ++i)
    out.push_back(static_cast<unsigned char>((bits >> (8 * i)) & 0xff));
}

template <typename T, typename U>
T get_scalar_le(const unsigned char* p) {
  U bits = 0;
  for (unsigned i = 0; i < sizeof(U); ++i) bits |= static_cast<U>(p[i]) << (8 * i);
  return std::bit_cast<T>(bits);
}

}  // namespace

void write_tensor(const Tensor& t, const std::filesystem::path& path) {
  if (t.dtype != 1 && t.dtype != 2) throw std::invalid_argument("tensor: bad dtype code");
  if (t.dims.empty() || t.dims.size() > 255) throw std::invalid_argument("tensor: bad ndim");
  const std::size_t n = t.element_count();
  if ((t.dtype == 1 && t.f32.size() != n) || (t.dtype == 2 && t.f64.size() != n))
    throw std::invalid_argument("tensor: payload size does not match dims");

  std::vector<unsigned char> buf;
  buf.reserve(6 + 4 * t.dims.size() + n * (t.dtype == 1 ? 4 : 8));
  buf.insert(buf.end(), kMagic, kMagic + 4);
  buf.push_back(t.dtype);
  buf.push_back(static_cast<unsigned char>(t.dims.size()));
  for (std::uint32_t d : t.dims) put_u32_le(buf, d);
  if (t.dtype == 1)
    for (float v : t.f32) put_scalar_le<float, std::uint32_t>(buf, v);
  else
    for (double v : t.f64) put_scalar_le<double, std::uint64_t>(buf, v);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("tensor: cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("tensor: write failed for " + path.string());
}

Tensor read_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("tensor: cannot open " + path.string());
  std::vector<unsigned char> buf{std::istreambuf_iterator<char>(in),
                                 std::istreambuf_iterator<char>()};
  if (buf.size() < 6 || std::memcmp(buf.data(), kMagic, 4) != 0)
    throw std::runtime_error("tensor: bad magic in " + path.string());

  Tensor t;
  t.dtype = buf[4];
  if (t.dtype != 1 && t.dtype != 2) throw std::runtime_error("tensor: bad dtype code");
  const std::size_t ndim = buf[5];
  if (ndim == 0 || buf.size() < 6 + 4 * ndim) throw std::runtime_error("tensor: truncated header");
  std::size_t off = 6;
  for (std::size_t i = 0; i < ndim; ++i, off += 4) t.dims.push_back(get_u32_le(&buf[off]));

  const std::size_t n = t.element_count();
  const std::size_t esz = t.dtype == 1 ? 4 : 8;
  if (buf.size() != off + n * esz) throw std::runtime_error("tensor: payload size mismatch");
  if (t.dtype == 1) {
    t.f32.reserve(n);
    for (std::size_t i = 0; i < n; ++i, off += 4)
      t.f32.push_back(get_scalar_le<float, std::uint32_t>(&buf[off]));
  } else {
    t.f64.reserve(n);
    for (std::size_t i = 0; i < n; ++i, off += 8)
      t.f64.push_back(get_scalar_le<double, std::uint64_t>(&buf[off]));
  }
  return t;
}

Tensor tensor_from_plane(const Plane<float>& p) {
  Tensor t;
  t.dtype = 1;
  t.dims = {static_cast<std::uint32_t>(p.rows()), static_cast<std::uint32_t>(p.cols())};
  t.f32.assign(p.data(), p.data() + p.size());
  return t;
}

Tensor tensor_from_plane(const Plane<double>& p) {
  Tensor t;
  t.dtype = 2;
  t.dims = {static_cast<std::uint32_t>(p.rows()), static_cast<std::uint32_t>(p.cols())};
  t.f64.assign(p.data(), p.data() + p.size());
  return t;
}

Tensor tensor_from_planes(const std::vector<Plane<float>>& planes) {
  if (planes.empty()) throw std::invalid_argument("tensor: no planes");
  Tensor t;
  t.dtype = 1;
  t.dims = {static_cast<std::uint32_t>(planes.size()),
            static_cast<std::uint32_t>(planes[0].rows()),
            static_cast<std::uint32_t>(planes[0].cols())};
  t.f32.reserve(t.element_count());
  for (const auto& p : planes) {
    if (p.rows() != planes[0].rows() || p.cols() != planes[0].cols())
      throw std::invalid_argument("tensor: plane shape mismatch");
    t.f32.insert(t.f32.end(), p.data(), p.data() + p.size());
  }
  return t;
}

Plane<float> plane_from_tensor(const Tensor& t) {
  if (t.dtype != 1 || t.dims.size() != 2)
    throw std::invalid_argument("tensor: expected a 2-D f32 tensor");
  Plane<float> p(static_cast<Eigen::Index>(t.dims[0]), static_cast<Eigen::Index>(t.dims[1]));
  std::memcpy(p.data(), t.f32.data(), t.f32.size() * sizeof(float));
  return p;
}

}  // namespace dsf
