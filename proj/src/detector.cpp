#include "dsf/detector.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "dsf/core/threading.hpp"

namespace dsf {

ScaleSpec make_scale(int filter_size) {
  if (filter_size < 9 || filter_size % 2 == 0 || filter_size % 3 != 0)
    throw std::invalid_argument("filter size must be an odd multiple of 3, >= 9");
  ScaleSpec s;
  s.filter_size = filter_size;
  s.sigma = 1.2 * filter_size / 9.0;
  s.step = std::max(1, static_cast<int>(std::lround(s.sigma)));
  return s;
}

std::vector<ScaleSpec> default_scales() { return scales_from_sizes({9, 15, 21, 27, 33}); }

std::vector<ScaleSpec> scales_from_sizes(const std::vector<int>& filter_sizes) {
  std::vector<ScaleSpec> out;
  out.reserve(filter_sizes.size());
  for (int L : filter_sizes) out.push_back(make_scale(L));
  return out;
}

HessianFilters hessian_filters(const ScaleSpec& spec) {
  const int L = spec.filter_size;
  const int m = L / 3;  // lobe width, odd
  const double norm = 1.0 / (static_cast<double>(L) * L);
  HessianFilters f;

  // D_xx: lobes of (2m-1) rows x m cols, side by side, weights {+1,-2,+1}.
  const int lh = 2 * m - 1;
  const int row0 = -(m - 1);
  f.dxx.boxes = {
      {row0, -(3 * m - 1) / 2, lh, m, norm},
      {row0, -(m - 1) / 2, lh, m, -2.0 * norm},
      {row0, (m + 1) / 2, lh, m, norm},
  };
  // D_yy: transpose of D_xx.
  for (const FilterBox& b : f.dxx.boxes)
    f.dyy.boxes.push_back({b.col_offset, b.row_offset, b.box_width, b.box_height, b.weight});
  // D_xy: four m x m lobes offset one pixel off the center axes.
  f.dxy.boxes = {
      {-m, 1, m, m, norm},    // top-right
      {1, -m, m, m, norm},    // bottom-left
      {-m, -m, m, m, -norm},  // top-left
      {1, 1, m, m, -norm},    // bottom-right
  };
  return f;
}

namespace detail {

template <typename Scalar>
DetectorMaps<Scalar> detector_maps(const IntegralImage& ii, const ScaleSpec& spec, int threads) {
  DetectorMaps<Scalar> maps;
  const HessianFilters f = hessian_filters(spec);
  maps.lxx = convolve_box_filter_t<Scalar>(ii, f.dxx, BorderMode::Truncate, threads);
  maps.lyy = convolve_box_filter_t<Scalar>(ii, f.dyy, BorderMode::Truncate, threads);
  maps.lxy = convolve_box_filter_t<Scalar>(ii, f.dxy, BorderMode::Truncate, threads);
  maps.det.resize(ii.height, ii.width);
  auto run = [&](Eigen::Index y0, Eigen::Index y1) {
    for (Eigen::Index y = y0; y < y1; ++y)
      for (Eigen::Index x = 0; x < ii.width; ++x) {
        const double xx = maps.lxx(y, x), yy = maps.lyy(y, x), xy = maps.lxy(y, x);
        maps.det(y, x) = static_cast<Scalar>(xx * yy - 0.81 * xy * xy);
      }
  };
  parallel_for_rows(ii.height, threads, run);
  return maps;
}

template DetectorMaps<float> detector_maps<float>(const IntegralImage&, const ScaleSpec&, int);
template DetectorMaps<double> detector_maps<double>(const IntegralImage&, const ScaleSpec&, int);

}  // namespace detail

ResponsePyramid detector_response(const GrayImage& img, const std::vector<ScaleSpec>& scales,
                                  int threads) {
  if (scales.empty()) throw std::invalid_argument("detector_response: no scales");
  int lmax = 0;
  for (const ScaleSpec& s : scales) lmax = std::max(lmax, s.filter_size);
  if (img.rows() < lmax || img.cols() < lmax)
    throw std::invalid_argument("detector_response: image smaller than largest filter");

  const IntegralImage ii = integral(img);
  ResponsePyramid pyr;
  pyr.scales = scales;
  for (const ScaleSpec& s : scales) {
    auto maps = detail::detector_maps<float>(ii, s, threads);
    pyr.lxx.push_back(std::move(maps.lxx));
    pyr.lyy.push_back(std::move(maps.lyy));
    pyr.lxy.push_back(std::move(maps.lxy));
    pyr.det.push_back(std::move(maps.det));
  }
  return pyr;
}

std::vector<Keypoint> extract_keypoints(const ResponsePyramid& pyr, float threshold) {
  const int ns = static_cast<int>(pyr.det.size());
  if (ns == 0) return {};
  const Eigen::Index h = pyr.det[0].rows(), w = pyr.det[0].cols();

  std::vector<Keypoint> kps;
  for (int si = 0; si < ns; ++si) {
    const GrayImage& d = pyr.det[static_cast<std::size_t>(si)];
    // Candidates are restricted to pixels whose filter support lies fully
    // inside the image; truncated-border responses are artifacts, not blob
    // evidence (a constant image must yield nothing).
    const Eigen::Index margin = pyr.scales[static_cast<std::size_t>(si)].filter_size / 2 + 1;
    if (h <= 2 * margin || w <= 2 * margin) continue;
    for (Eigen::Index y = margin; y < h - margin; ++y)
      for (Eigen::Index x = margin; x < w - margin; ++x) {
        const float v = d(y, x);
        if (!(v > threshold)) continue;
        bool is_max = true;
        for (int sj = std::max(0, si - 1); sj <= std::min(ns - 1, si + 1) && is_max; ++sj) {
          const GrayImage& n = pyr.det[static_cast<std::size_t>(sj)];
          for (Eigen::Index yy = std::max<Eigen::Index>(0, y - 1);
               yy <= std::min(h - 1, y + 1) && is_max; ++yy)
            for (Eigen::Index xx = std::max<Eigen::Index>(0, x - 1);
                 xx <= std::min(w - 1, x + 1); ++xx) {
              if (sj == si && yy == y && xx == x) continue;
              if (!(v > n(yy, xx))) {
                is_max = false;
                break;
              }
            }
        }
        if (!is_max) continue;
        Keypoint kp;
        kp.x = static_cast<int>(x);
        kp.y = static_cast<int>(y);
        kp.scale_index = si;
        kp.response = v;
        const float lap = pyr.lxx[static_cast<std::size_t>(si)](y, x) +
                          pyr.lyy[static_cast<std::size_t>(si)](y, x);
        kp.laplacian_sign = lap < 0.0f ? -1 : 1;
        kps.push_back(kp);
      }
  }

  std::sort(kps.begin(), kps.end(), [](const Keypoint& a, const Keypoint& b) {
    if (a.response != b.response) return a.response > b.response;
    if (a.y != b.y) return a.y < b.y;
    if (a.x != b.x) return a.x < b.x;
    return a.scale_index < b.scale_index;
  });
  return kps;
}

std::string keypoints_to_csv(const std::vector<Keypoint>& kps) {
  std::ostringstream out;
  out << "x,y,scale_index,response,laplacian_sign\n";
  char buf[64];
  for (const Keypoint& k : kps) {
    std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(k.response));
    out << k.x << ',' << k.y << ',' << k.scale_index << ',' << buf << ',' << k.laplacian_sign
        << '\n';
  }
  return out.str();
}

}  // namespace dsf
