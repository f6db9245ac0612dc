#include "dsf/descriptor.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "dsf/core/threading.hpp"

namespace dsf {

namespace {

double gauss2(double dy, double dx, double sigma) {
  return std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma)) /
         (2.0 * std::numbers::pi * sigma * sigma);
}

int round_away(double v) { return static_cast<int>(std::lround(v)); }

}  // namespace

DescriptorLUT build_lut(const ScaleSpec& spec) {
  DescriptorLUT lut;
  const int s = spec.step;
  lut.step = s;

  const double sigma1 = 2.5 * s;
  for (int gy = -4; gy <= 4; ++gy)
    for (int gx = -4; gx <= 4; ++gx) {
      const int k = (gy + 4) * 9 + (gx + 4);
      const int dy = round_away(static_cast<double>(gy) * s);
      const int dx = round_away(static_cast<double>(gx) * s);
      lut.offsets[static_cast<std::size_t>(k)] = {.dy = dy, .dx = dx};
      lut.sample_weights[static_cast<std::size_t>(k)] = gauss2(dy, dx, sigma1);
    }

  const std::array<double, 4> grid = {-7.5, -2.5, 2.5, 7.5};
  for (int gy = 0; gy < 4; ++gy)
    for (int gx = 0; gx < 4; ++gx) {
      const int n = gy * 4 + gx;
      lut.centers[static_cast<std::size_t>(n)] = {
          .dy = round_away(grid[static_cast<std::size_t>(gy)] * s),
          .dx = round_away(grid[static_cast<std::size_t>(gx)] * s)};
      // Positions {-1.5,-0.5,0.5,1.5} in units of the 5s neighbourhood
      // spacing, weighted by a sigma-1.5 Gaussian.
      lut.neighbourhood_weights[static_cast<std::size_t>(n)] =
          gauss2(gy - 1.5, gx - 1.5, 1.5);
    }
  return lut;
}

BoxFilterSpec haar_x_spec(int step) {
  const int s = step;
  const double inv = 1.0 / (4.0 * s * s);
  BoxFilterSpec f;
  f.boxes = {
      {-s, 0, 2 * s, s, inv},    // right half
      {-s, -s, 2 * s, s, -inv},  // left half
  };
  return f;
}

BoxFilterSpec haar_y_spec(int step) {
  const int s = step;
  const double inv = 1.0 / (4.0 * s * s);
  BoxFilterSpec f;
  f.boxes = {
      {0, -s, s, 2 * s, inv},    // bottom half
      {-s, -s, s, 2 * s, -inv},  // top half
  };
  return f;
}

HaarResponses haar_responses(const GrayImage& img, const ScaleSpec& spec, int threads) {
  if (img.rows() < 2 * spec.step || img.cols() < 2 * spec.step)
    throw std::invalid_argument("haar_responses: image smaller than filter");
  const IntegralImage ii = integral(img);
  HaarResponses r;
  r.dx_map = convolve_box_filter_t<float>(ii, haar_x_spec(spec.step), BorderMode::Replicate, threads);
  r.dy_map = convolve_box_filter_t<float>(ii, haar_y_spec(spec.step), BorderMode::Replicate, threads);
  return r;
}

DenseDescriptorMap dense_descriptors_fast(const GrayImage& img, const ScaleSpec& spec,
                                          const DescriptorLUT& lut, int threads) {
  const Eigen::Index H = img.rows(), W = img.cols();
  const HaarResponses haar = haar_responses(img, spec, threads);
  const Plane<float>& dxm = haar.dx_map;
  const Plane<float>& dym = haar.dy_map;
  const Plane<float> axm = dxm.abs();
  const Plane<float> aym = dym.abs();

  DenseDescriptorMap map;
  map.height = H;
  map.width = W;
  map.channels.assign(64, Plane<float>::Zero(H, W));

  // The 81 taps of each neighbourhood form a 9x9 grid: group them by row
  // offset so one output row is loaded and stored once per 9-tap column
  // pass instead of once per tap. Within a group the taps run in sample
  // order, so per-channel accumulation stays sequential over k.
  const int s = lut.step;

  auto run = [&](Eigen::Index y0, Eigen::Index y1) {
    // dst[x] += sum_j w[j] * src[clamp(x + tx0 + j*stride)], taps in k
    // order. The stride is a template constant for the common steps so the
    // tap loop unrolls; SC == 0 falls back to the runtime stride.
    auto conv9_row = [W, s]<int SC>(std::integral_constant<int, SC>, float* __restrict dst,
                                    const float* __restrict src_row, Eigen::Index tx0,
                                    const float* __restrict w) {
      const int st = SC > 0 ? SC : s;
      // Columns where all nine taps stay in bounds.
      const Eigen::Index x_lo = std::clamp<Eigen::Index>(-tx0, 0, W);
      const Eigen::Index x_hi = std::clamp<Eigen::Index>(W - (tx0 + 8 * st), 0, W);
      for (Eigen::Index x = 0; x < x_lo; ++x) {
        float acc = 0.0f;
        for (int j = 0; j < 9; ++j) acc += w[j] * src_row[clamp_index(x + tx0 + j * st, W)];
        dst[x] += acc;
      }
      // Three accumulator chains break the fma latency dependency; the
      // grouping is a fixed tree, so results stay deterministic.
      const float* __restrict sr = src_row + tx0;
      for (Eigen::Index x = x_lo; x < x_hi; ++x) {
        float t0 = w[0] * sr[x];
        float t1 = w[1] * sr[x + st];
        float t2 = w[2] * sr[x + 2 * st];
        t0 += w[3] * sr[x + 3 * st];
        t1 += w[4] * sr[x + 4 * st];
        t2 += w[5] * sr[x + 5 * st];
        t0 += w[6] * sr[x + 6 * st];
        t1 += w[7] * sr[x + 7 * st];
        t2 += w[8] * sr[x + 8 * st];
        dst[x] += t0 + t1 + t2;
      }
      for (Eigen::Index x = std::max(x_lo, x_hi); x < W; ++x) {
        float acc = 0.0f;
        for (int j = 0; j < 9; ++j) acc += w[j] * src_row[clamp_index(x + tx0 + j * st, W)];
        dst[x] += acc;
      }
    };

    // Per-neighbourhood 9x9 weight grid in k order (row-major), with the
    // neighbourhood weight folded in.
    float wgrid[16][9][9];
    for (int n = 0; n < 16; ++n) {
      const double nw = lut.neighbourhood_weights[static_cast<std::size_t>(n)];
      for (int k = 0; k < 81; ++k)
        wgrid[n][k / 9][k % 9] =
            static_cast<float>(nw * lut.sample_weights[static_cast<std::size_t>(k)]);
    }

    auto sweep = [&]<int SC>(std::integral_constant<int, SC> stride) {
      for (Eigen::Index y = y0; y < y1; ++y) {
        for (int n = 0; n < 16; ++n) {
          const PixelOffset cen = lut.centers[static_cast<std::size_t>(n)];
          float* d0 = map.channels[static_cast<std::size_t>(4 * n + 0)].row(y).data();
          float* d1 = map.channels[static_cast<std::size_t>(4 * n + 1)].row(y).data();
          float* d2 = map.channels[static_cast<std::size_t>(4 * n + 2)].row(y).data();
          float* d3 = map.channels[static_cast<std::size_t>(4 * n + 3)].row(y).data();
          const Eigen::Index tx0 = cen.dx - 4 * s;
          for (int g = 0; g < 9; ++g) {
            const Eigen::Index sy = clamp_index(y + cen.dy + (g - 4) * s, H);
            const float* w = wgrid[n][g];
            conv9_row(stride, d0, dxm.row(sy).data(), tx0, w);
            conv9_row(stride, d1, dym.row(sy).data(), tx0, w);
            conv9_row(stride, d2, axm.row(sy).data(), tx0, w);
            conv9_row(stride, d3, aym.row(sy).data(), tx0, w);
          }
        }
      }
    };
    switch (s) {
      case 1: sweep(std::integral_constant<int, 1>{}); break;
      case 2: sweep(std::integral_constant<int, 2>{}); break;
      case 3: sweep(std::integral_constant<int, 3>{}); break;
      case 4: sweep(std::integral_constant<int, 4>{}); break;
      case 5: sweep(std::integral_constant<int, 5>{}); break;
      case 6: sweep(std::integral_constant<int, 6>{}); break;
      default: sweep(std::integral_constant<int, 0>{}); break;
    }

    // Per-pixel L2 normalisation; exact zero vectors stay zero.
    Eigen::Array<float, 1, Eigen::Dynamic> nsq(W), inv(W);
    for (Eigen::Index y = y0; y < y1; ++y) {
      nsq.setZero();
      for (int ci = 0; ci < 64; ++ci)
        nsq += map.channels[static_cast<std::size_t>(ci)].row(y).square();
      inv = (nsq > 0.0f).select(nsq.sqrt().inverse(), 0.0f);
      for (int ci = 0; ci < 64; ++ci) map.channels[static_cast<std::size_t>(ci)].row(y) *= inv;
    }
  };
  parallel_for_rows(H, threads, run);
  return map;
}

namespace detail {

DenseForwardD dense_forward_d(const GrayImage& img, const ScaleSpec& spec,
                              const DescriptorLUT& lut) {
  return dense_forward_d(Plane<double>(img.cast<double>()), spec, lut);
}

DenseForwardD dense_forward_d(const Plane<double>& img, const ScaleSpec& spec,
                              const DescriptorLUT& lut) {
  const Eigen::Index H = img.rows(), W = img.cols();
  const IntegralImage ii = integral(img);

  DenseForwardD fwd;
  fwd.dx_map = convolve_box_filter_t<double>(ii, haar_x_spec(spec.step), BorderMode::Replicate);
  fwd.dy_map = convolve_box_filter_t<double>(ii, haar_y_spec(spec.step), BorderMode::Replicate);
  fwd.unnormalized.assign(64, Plane<double>(H, W));
  fwd.channels.assign(64, Plane<double>(H, W));
  fwd.norm.resize(H, W);

  double acc[64];
  for (Eigen::Index y = 0; y < H; ++y)
    for (Eigen::Index x = 0; x < W; ++x) {
      for (double& a : acc) a = 0.0;
      for (int n = 0; n < 16; ++n) {
        const PixelOffset c = lut.centers[static_cast<std::size_t>(n)];
        for (int k = 0; k < 81; ++k) {
          const PixelOffset o = lut.offsets[static_cast<std::size_t>(k)];
          const Eigen::Index qy = clamp_index(y + c.dy + o.dy, H);
          const Eigen::Index qx = clamp_index(x + c.dx + o.dx, W);
          const double sw = lut.sample_weights[static_cast<std::size_t>(k)];
          const double wdx = sw * fwd.dx_map(qy, qx);
          const double wdy = sw * fwd.dy_map(qy, qx);
          acc[4 * n + 0] += wdx;
          acc[4 * n + 1] += wdy;
          acc[4 * n + 2] += std::abs(wdx);
          acc[4 * n + 3] += std::abs(wdy);
        }
      }
      double nsq = 0.0;
      for (int n = 0; n < 16; ++n) {
        const double nw = lut.neighbourhood_weights[static_cast<std::size_t>(n)];
        for (int ci = 4 * n; ci < 4 * n + 4; ++ci) {
          acc[ci] *= nw;
          nsq += acc[ci] * acc[ci];
        }
      }
      const double norm = std::sqrt(nsq);
      fwd.norm(y, x) = norm;
      const double inv = norm > 0.0 ? 1.0 / norm : 0.0;
      for (int ci = 0; ci < 64; ++ci) {
        fwd.unnormalized[static_cast<std::size_t>(ci)](y, x) = acc[ci];
        fwd.channels[static_cast<std::size_t>(ci)](y, x) = acc[ci] * inv;
      }
    }
  return fwd;
}

}  // namespace detail

DenseDescriptorMap dense_descriptors_naive(const GrayImage& img, const ScaleSpec& spec,
                                           const DescriptorLUT& lut) {
  const detail::DenseForwardD fwd = detail::dense_forward_d(img, spec, lut);
  DenseDescriptorMap map;
  map.height = img.rows();
  map.width = img.cols();
  map.channels.reserve(64);
  for (int ci = 0; ci < 64; ++ci)
    map.channels.push_back(fwd.channels[static_cast<std::size_t>(ci)].cast<float>());
  return map;
}

std::vector<DescriptorLUT> build_luts(const std::vector<ScaleSpec>& scales) {
  std::vector<DescriptorLUT> luts;
  luts.reserve(scales.size());
  for (const ScaleSpec& s : scales) luts.push_back(build_lut(s));
  return luts;
}

std::vector<DenseDescriptorMap> dense_descriptor_pyramid(const GrayImage& img,
                                                         const std::vector<ScaleSpec>& scales,
                                                         const std::vector<DescriptorLUT>& luts,
                                                         int threads) {
  if (scales.size() != luts.size())
    throw std::invalid_argument("dense_descriptor_pyramid: scales/luts size mismatch");
  std::vector<DenseDescriptorMap> maps;
  maps.reserve(scales.size());
  for (std::size_t i = 0; i < scales.size(); ++i) {
    DenseDescriptorMap m = dense_descriptors_fast(img, scales[i], luts[i], threads);
    m.scale_index = static_cast<int>(i);
    maps.push_back(std::move(m));
  }
  return maps;
}

std::vector<Descriptor> describe_keypoints(const std::vector<DenseDescriptorMap>& maps,
                                           const std::vector<Keypoint>& kps) {
  std::vector<Descriptor> out;
  out.reserve(kps.size());
  for (const Keypoint& kp : kps) {
    const DenseDescriptorMap* map = nullptr;
    for (const DenseDescriptorMap& m : maps)
      if (m.scale_index == kp.scale_index) {
        map = &m;
        break;
      }
    if (!map) throw std::invalid_argument("describe_keypoints: no map for scale index");
    if (kp.y < 0 || kp.y >= map->height || kp.x < 0 || kp.x >= map->width)
      throw std::invalid_argument("describe_keypoints: keypoint out of bounds");
    out.push_back(map->at(kp.y, kp.x));
  }
  return out;
}

}  // namespace dsf
