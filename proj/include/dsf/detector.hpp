#pragma once

#include <string>
#include <vector>

#include "dsf/core/integral.hpp"
#include "dsf/core/plane.hpp"

namespace dsf {

/// One detector scale: box-filter side L, the Gaussian scale it
/// approximates (sigma = 1.2 * L / 9), and the descriptor sampling step
/// s = round(sigma).
struct ScaleSpec {
  int filter_size = 9;
  double sigma = 1.2;
  int step = 1;
};

/// Builds a ScaleSpec from a filter size. L must be an odd multiple of 3,
/// at least 9, so the three second-derivative lobes tile exactly.
ScaleSpec make_scale(int filter_size);

/// The default 5-scale ladder L in {9, 15, 21, 27, 33}.
std::vector<ScaleSpec> default_scales();
std::vector<ScaleSpec> scales_from_sizes(const std::vector<int>& filter_sizes);

struct HessianFilters {
  BoxFilterSpec dxx, dyy, dxy;
};

/// Box approximations of the Gaussian second derivatives at scale L:
/// D_xx has three side-by-side vertical lobes weighted {+1,-2,+1}, D_yy is
/// its transpose, D_xy four diagonal lobes of alternating sign. All weights
/// carry the 1/L^2 area normalisation.
HessianFilters hessian_filters(const ScaleSpec& spec);

/// Per-scale determinant-of-Hessian response maps together with the raw
/// second-derivative responses they were built from:
///   det = lxx * lyy - 0.81 * lxy^2   (elementwise).
struct ResponsePyramid {
  std::vector<ScaleSpec> scales;
  std::vector<GrayImage> det;
  std::vector<GrayImage> lxx, lyy, lxy;
};

ResponsePyramid detector_response(const GrayImage& img, const std::vector<ScaleSpec>& scales,
                                  int threads = 1);

struct Keypoint {
  int x = 0;
  int y = 0;
  int scale_index = 0;
  float response = 0.0f;
  int laplacian_sign = 1;  // sign(lxx + lyy), 0 mapped to +1
};

/// Strict maxima of the det maps over the 3x3x3 scale-space neighbourhood
/// (clipped at image and scale boundaries) with response > threshold.
/// Candidates keep a per-scale margin of filter_size/2 + 1 from the image
/// edges so truncated-filter artifacts never become keypoints. Sorted by
/// descending response, ties by (y, x, scale_index) ascending.
std::vector<Keypoint> extract_keypoints(const ResponsePyramid& pyr, float threshold);

/// CSV serialisation: header "x,y,scale_index,response,laplacian_sign".
std::string keypoints_to_csv(const std::vector<Keypoint>& kps);

namespace detail {

/// Scalar-templated response maps for one scale; the double instantiation
/// backs the gradient paths.
template <typename Scalar>
struct DetectorMaps {
  Plane<Scalar> lxx, lyy, lxy, det;
};

template <typename Scalar>
DetectorMaps<Scalar> detector_maps(const IntegralImage& ii, const ScaleSpec& spec,
                                   int threads = 1);

}  // namespace detail

}  // namespace dsf
