#pragma once

#include <cmath>
#include <vector>

#include "dsf/core/plane.hpp"
#include "dsf/core/rng.hpp"

namespace dsf::testing {

/// Smooth textured fixture: a sum of random Gaussian blobs on a mid-gray
/// background, rescaled to [0.05, 0.95]. Deterministic per seed.
inline GrayImage blob_image(Eigen::Index h, Eigen::Index w, std::uint64_t seed, int blobs = 24) {
  Rng rng(seed);
  Plane<double> acc = Plane<double>::Zero(h, w);
  for (int i = 0; i < blobs; ++i) {
    const double cy = rng.uniform(0.1, 0.9) * static_cast<double>(h);
    const double cx = rng.uniform(0.1, 0.9) * static_cast<double>(w);
    const double sigma = rng.uniform(1.5, 6.0);
    const double amp = rng.uniform(-1.0, 1.0);
    const double inv = 1.0 / (2.0 * sigma * sigma);
    for (Eigen::Index y = 0; y < h; ++y)
      for (Eigen::Index x = 0; x < w; ++x) {
        const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
        acc(y, x) += amp * std::exp(-(dy * dy + dx * dx) * inv);
      }
  }
  const double lo = acc.minCoeff(), hi = acc.maxCoeff();
  const double span = hi > lo ? hi - lo : 1.0;
  GrayImage img(h, w);
  for (Eigen::Index y = 0; y < h; ++y)
    for (Eigen::Index x = 0; x < w; ++x)
      img(y, x) = static_cast<float>(0.05 + 0.9 * (acc(y, x) - lo) / span);
  return img;
}

/// Single centred Gaussian blob on a dark background.
inline GrayImage gaussian_blob(Eigen::Index h, Eigen::Index w, double cy, double cx, double sigma,
                               double amp = 1.0) {
  GrayImage img(h, w);
  const double inv = 1.0 / (2.0 * sigma * sigma);
  for (Eigen::Index y = 0; y < h; ++y)
    for (Eigen::Index x = 0; x < w; ++x) {
      const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
      img(y, x) = static_cast<float>(amp * std::exp(-(dy * dy + dx * dx) * inv));
    }
  return img;
}

/// Brute-force truncated-box pixel sum (double loop over the source).
template <typename Scalar>
double brute_box_sum(const Plane<Scalar>& img, long row, long col, long h, long w) {
  double acc = 0.0;
  for (long y = row; y < row + h; ++y)
    for (long x = col; x < col + w; ++x) {
      if (y < 0 || y >= img.rows() || x < 0 || x >= img.cols()) continue;
      acc += static_cast<double>(img(y, x));
    }
  return acc;
}

/// Brute-force edge-replicated box sum.
template <typename Scalar>
double brute_box_sum_replicate(const Plane<Scalar>& img, long row, long col, long h, long w) {
  double acc = 0.0;
  for (long y = row; y < row + h; ++y)
    for (long x = col; x < col + w; ++x)
      acc += static_cast<double>(img(clamp_index(y, img.rows()), clamp_index(x, img.cols())));
  return acc;
}

inline GrayImage flip_h(const GrayImage& img) {
  GrayImage out(img.rows(), img.cols());
  for (Eigen::Index y = 0; y < img.rows(); ++y)
    for (Eigen::Index x = 0; x < img.cols(); ++x) out(y, x) = img(y, img.cols() - 1 - x);
  return out;
}

}  // namespace dsf::testing
