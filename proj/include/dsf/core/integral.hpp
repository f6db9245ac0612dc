#pragma once

#include <vector>

#include "dsf/core/plane.hpp"

namespace dsf {

/// Summed-area table. table(y,x) holds the sum of all source pixels with
/// row <= y and col <= x, accumulated in double regardless of the source
/// scalar type.
struct IntegralImage {
  Eigen::Index height = 0;
  Eigen::Index width = 0;
  Plane<double> table;
};

IntegralImage integral(const GrayImage& img);
IntegralImage integral(const Plane<double>& img);

/// Sum of pixels in the rectangle [row, row+h) x [col, col+w) intersected
/// with the image. Rectangles fully outside return 0 (truncated-box
/// semantics, the OpenSURF convention).
double box_sum(const IntegralImage& ii, Eigen::Index row, Eigen::Index col,
               Eigen::Index h, Eigen::Index w);

/// Same rectangle sum but over the edge-replicated extension of the image:
/// every cell of the full h x w rectangle reads pixel (clamp(y), clamp(x)).
/// Used by the Haar-response path, where replication keeps responses
/// offset-free at the borders.
double box_sum_replicate(const IntegralImage& ii, Eigen::Index row, Eigen::Index col,
                         Eigen::Index h, Eigen::Index w);

enum class BorderMode { Truncate, Replicate };

/// One weighted rectangle of a box filter, positioned relative to the
/// output pixel: top-left corner at (y + row_offset, x + col_offset).
struct FilterBox {
  int row_offset = 0;
  int col_offset = 0;
  int box_height = 1;
  int box_width = 1;
  double weight = 1.0;
};

struct BoxFilterSpec {
  std::vector<FilterBox> boxes;
};

/// Per-pixel weighted sum of box sums centered at that pixel. Output has
/// the same H x W as the source of `ii`.
template <typename Scalar>
Plane<Scalar> convolve_box_filter_t(const IntegralImage& ii, const BoxFilterSpec& spec,
                                    BorderMode mode = BorderMode::Truncate,
                                    int threads = 1);

GrayImage convolve_box_filter(const IntegralImage& ii, const BoxFilterSpec& spec,
                              int threads = 1);

/// Transpose of convolve_box_filter as a linear map: distributes each seed
/// value uniformly over the pixels its (clamped or replicated) rectangles
/// actually read. Exact adjoint of the forward path, realised with a 2-D
/// difference array followed by a prefix sum.
Plane<double> convolve_box_filter_adjoint(const BoxFilterSpec& spec,
                                          const Plane<double>& seed,
                                          BorderMode mode = BorderMode::Truncate);

}  // namespace dsf
