#pragma once

#include <Eigen/Core>

namespace dsf {

/// Row-major H x W scalar field. Rows index y (top to bottom), cols index x.
template <typename Scalar>
using Plane = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Single-channel intensity image, nominal range [0,1].
using GrayImage = Plane<float>;

inline bool same_shape(const auto& a, const auto& b) {
  return a.rows() == b.rows() && a.cols() == b.cols();
}

template <typename Scalar>
bool all_finite(const Plane<Scalar>& p) {
  return p.isFinite().all();
}

inline Eigen::Index clamp_index(Eigen::Index i, Eigen::Index n) {
  return i < 0 ? 0 : (i >= n ? n - 1 : i);
}

}  // namespace dsf
