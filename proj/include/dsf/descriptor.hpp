#pragma once

#include <array>
#include <vector>

#include "dsf/core/integral.hpp"
#include "dsf/core/plane.hpp"
#include "dsf/detector.hpp"

namespace dsf {

struct PixelOffset {
  int dy = 0;
  int dx = 0;
};

/// Precomputed sampling tables for one scale. A descriptor at pixel p
/// gathers, for each of the 16 neighbourhoods (4x4 grid, row-major), the 81
/// Haar responses at p + centers[n] + offsets[k], weighted by
/// sample_weights[k], and scales the four accumulated components by
/// neighbourhood_weights[n].
struct DescriptorLUT {
  int step = 1;
  std::array<PixelOffset, 81> offsets;    // the {-4..4}^2 grid scaled by step
  std::array<double, 81> sample_weights;  // Gaussian, sigma = 2.5 * step
  std::array<PixelOffset, 16> centers;    // {-7.5,-2.5,2.5,7.5} * step, rounded
  std::array<double, 16> neighbourhood_weights;  // Gaussian, sigma = 1.5 grid units
};

DescriptorLUT build_lut(const ScaleSpec& spec);

/// X- and Y-direction Haar box filters at scale s (filter side 2s), as box
/// filter specs: X is right half +1 / left half -1, Y is bottom half +1 /
/// top half -1, both normalised by the filter area. Evaluated with
/// edge-replicated borders so responses stay offset-free everywhere.
BoxFilterSpec haar_x_spec(int step);
BoxFilterSpec haar_y_spec(int step);

struct HaarResponses {
  GrayImage dx_map, dy_map;
};

HaarResponses haar_responses(const GrayImage& img, const ScaleSpec& spec, int threads = 1);

/// Dense per-pixel 64-channel descriptor field for one scale. Channels are
/// stored as 64 planes ordered neighbourhood-major, component-minor:
/// channel 4n+c with c in {sum dx, sum dy, sum |dx|, sum |dy|}. Every
/// per-pixel 64-vector is unit L2 norm or exactly zero.
struct DenseDescriptorMap {
  int scale_index = 0;
  Eigen::Index height = 0;
  Eigen::Index width = 0;
  std::vector<Plane<float>> channels;  // 64 planes, H x W

  Eigen::Matrix<float, 64, 1> at(Eigen::Index y, Eigen::Index x) const {
    Eigen::Matrix<float, 64, 1> v;
    for (int c = 0; c < 64; ++c) v(c) = channels[static_cast<std::size_t>(c)](y, x);
    return v;
  }
};

/// Stacked-plane formulation: each (neighbourhood, sample) pair becomes one
/// shifted whole-plane multiply-accumulate over the Haar response maps and
/// their absolute values. Accumulation order over samples is fixed, so the
/// output is independent of the thread count.
DenseDescriptorMap dense_descriptors_fast(const GrayImage& img, const ScaleSpec& spec,
                                          const DescriptorLUT& lut, int threads = 1);

/// Per-pixel quadruple-loop reference in double precision. Semantically
/// identical to the fast path; kept free of its plane machinery so the two
/// can check each other.
DenseDescriptorMap dense_descriptors_naive(const GrayImage& img, const ScaleSpec& spec,
                                           const DescriptorLUT& lut);

/// All scales, with scale_index assigned from position.
std::vector<DenseDescriptorMap> dense_descriptor_pyramid(const GrayImage& img,
                                                         const std::vector<ScaleSpec>& scales,
                                                         const std::vector<DescriptorLUT>& luts,
                                                         int threads = 1);

std::vector<DescriptorLUT> build_luts(const std::vector<ScaleSpec>& scales);

using Descriptor = Eigen::Matrix<float, 64, 1>;

/// Samples the dense maps at keypoint locations. Each keypoint's
/// scale_index must have a map present.
std::vector<Descriptor> describe_keypoints(const std::vector<DenseDescriptorMap>& maps,
                                           const std::vector<Keypoint>& kps);

namespace detail {

/// Double-precision forward pass with all intermediates, backing the naive
/// oracle and the gradient code.
struct DenseForwardD {
  Plane<double> dx_map, dy_map;
  std::vector<Plane<double>> unnormalized;  // 64 planes, neighbourhood weights applied
  Plane<double> norm;                       // pre-normalisation L2 norm per pixel
  std::vector<Plane<double>> channels;      // 64 planes, normalised
};

DenseForwardD dense_forward_d(const Plane<double>& img, const ScaleSpec& spec,
                              const DescriptorLUT& lut);
DenseForwardD dense_forward_d(const GrayImage& img, const ScaleSpec& spec,
                              const DescriptorLUT& lut);

}  // namespace detail

}  // namespace dsf
