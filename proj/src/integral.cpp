#include "dsf/core/integral.hpp"

#include <stdexcept>

#include "dsf/core/threading.hpp"

namespace dsf {

namespace {

template <typename Scalar>
IntegralImage integral_impl(const Plane<Scalar>& img) {
  const Eigen::Index h = img.rows(), w = img.cols();
  if (h <= 0 || w <= 0) throw std::invalid_argument("integral: empty image");
  IntegralImage ii;
  ii.height = h;
  ii.width = w;
  ii.table.resize(h, w);
  double rs = 0.0;
  for (Eigen::Index x = 0; x < w; ++x) {
    rs += static_cast<double>(img(0, x));
    ii.table(0, x) = rs;
  }
  for (Eigen::Index y = 1; y < h; ++y) {
    rs = 0.0;
    for (Eigen::Index x = 0; x < w; ++x) {
      rs += static_cast<double>(img(y, x));
      ii.table(y, x) = rs + ii.table(y - 1, x);
    }
  }
  return ii;
}

/// Inclusive in-bounds rectangle sum [r0,r1] x [c0,c1].
inline double rect_sum(const Plane<double>& t, Eigen::Index r0, Eigen::Index r1,
                       Eigen::Index c0, Eigen::Index c1) {
  double s = t(r1, c1);
  if (r0 > 0) s -= t(r0 - 1, c1);
  if (c0 > 0) s -= t(r1, c0 - 1);
  if (r0 > 0 && c0 > 0) s += t(r0 - 1, c0 - 1);
  return s;
}

struct ReplicateSpans {
  // Row/col counts falling off each side, and the in-bounds middle span.
  Eigen::Index kt, kb, kl, kr;
  Eigen::Index ra, rb, ca, cb;  // middle span, valid iff ra<=rb / ca<=cb
};

inline ReplicateSpans replicate_spans(Eigen::Index row, Eigen::Index col,
                                      Eigen::Index h, Eigen::Index w,
                                      Eigen::Index H, Eigen::Index W) {
  const Eigen::Index r1 = row + h - 1, c1 = col + w - 1;
  ReplicateSpans s;
  s.kt = std::min<Eigen::Index>(h, std::max<Eigen::Index>(0, -row));
  s.kb = std::min<Eigen::Index>(h, std::max<Eigen::Index>(0, r1 - (H - 1)));
  s.kl = std::min<Eigen::Index>(w, std::max<Eigen::Index>(0, -col));
  s.kr = std::min<Eigen::Index>(w, std::max<Eigen::Index>(0, c1 - (W - 1)));
  s.ra = std::max<Eigen::Index>(row, 0);
  s.rb = std::min<Eigen::Index>(r1, H - 1);
  s.ca = std::max<Eigen::Index>(col, 0);
  s.cb = std::min<Eigen::Index>(c1, W - 1);
  return s;
}

}  // namespace

IntegralImage integral(const GrayImage& img) { return integral_impl(img); }
IntegralImage integral(const Plane<double>& img) { return integral_impl(img); }

double box_sum(const IntegralImage& ii, Eigen::Index row, Eigen::Index col,
               Eigen::Index h, Eigen::Index w) {
  if (row > 0 && col > 0 && row + h <= ii.height && col + w <= ii.width) {
    const Plane<double>& t = ii.table;
    return t(row + h - 1, col + w - 1) - t(row - 1, col + w - 1) - t(row + h - 1, col - 1) +
           t(row - 1, col - 1);
  }
  const Eigen::Index r0 = std::max<Eigen::Index>(row, 0);
  const Eigen::Index c0 = std::max<Eigen::Index>(col, 0);
  const Eigen::Index r1 = std::min(row + h - 1, ii.height - 1);
  const Eigen::Index c1 = std::min(col + w - 1, ii.width - 1);
  if (r1 < r0 || c1 < c0) return 0.0;
  return rect_sum(ii.table, r0, r1, c0, c1);
}

double box_sum_replicate(const IntegralImage& ii, Eigen::Index row, Eigen::Index col,
                         Eigen::Index h, Eigen::Index w) {
  const Eigen::Index H = ii.height, W = ii.width;
  if (row > 0 && col > 0 && row + h <= H && col + w <= W) {
    const Plane<double>& t = ii.table;
    return t(row + h - 1, col + w - 1) - t(row - 1, col + w - 1) - t(row + h - 1, col - 1) +
           t(row - 1, col - 1);
  }
  const auto s = replicate_spans(row, col, h, w, H, W);
  const Plane<double>& t = ii.table;

  const bool rows_mid = s.ra <= s.rb;
  const bool cols_mid = s.ca <= s.cb;

  double acc = 0.0;
  // Nine zones: {top row 0, middle rows, bottom row H-1} x {left col 0,
  // middle cols, right col W-1}, edge zones weighted by replication counts.
  if (s.kt > 0) {
    if (s.kl > 0) acc += double(s.kt) * double(s.kl) * rect_sum(t, 0, 0, 0, 0);
    if (cols_mid) acc += double(s.kt) * rect_sum(t, 0, 0, s.ca, s.cb);
    if (s.kr > 0) acc += double(s.kt) * double(s.kr) * rect_sum(t, 0, 0, W - 1, W - 1);
  }
  if (rows_mid) {
    if (s.kl > 0) acc += double(s.kl) * rect_sum(t, s.ra, s.rb, 0, 0);
    if (cols_mid) acc += rect_sum(t, s.ra, s.rb, s.ca, s.cb);
    if (s.kr > 0) acc += double(s.kr) * rect_sum(t, s.ra, s.rb, W - 1, W - 1);
  }
  if (s.kb > 0) {
    if (s.kl > 0) acc += double(s.kb) * double(s.kl) * rect_sum(t, H - 1, H - 1, 0, 0);
    if (cols_mid) acc += double(s.kb) * rect_sum(t, H - 1, H - 1, s.ca, s.cb);
    if (s.kr > 0) acc += double(s.kb) * double(s.kr) * rect_sum(t, H - 1, H - 1, W - 1, W - 1);
  }
  return acc;
}

template <typename Scalar>
Plane<Scalar> convolve_box_filter_t(const IntegralImage& ii, const BoxFilterSpec& spec,
                                    BorderMode mode, int threads) {
  if (spec.boxes.empty()) throw std::invalid_argument("convolve_box_filter: empty spec");
  const Eigen::Index H = ii.height, W = ii.width;
  Plane<Scalar> out(H, W);
  auto run = [&](Eigen::Index y0, Eigen::Index y1) {
    for (Eigen::Index y = y0; y < y1; ++y)
      for (Eigen::Index x = 0; x < W; ++x) {
        double acc = 0.0;
        for (const FilterBox& b : spec.boxes) {
          const double s = mode == BorderMode::Truncate
                               ? box_sum(ii, y + b.row_offset, x + b.col_offset,
                                         b.box_height, b.box_width)
                               : box_sum_replicate(ii, y + b.row_offset, x + b.col_offset,
                                                   b.box_height, b.box_width);
          acc += b.weight * s;
        }
        out(y, x) = static_cast<Scalar>(acc);
      }
  };
  parallel_for_rows(H, threads, run);
  return out;
}

template Plane<float> convolve_box_filter_t<float>(const IntegralImage&, const BoxFilterSpec&,
                                                   BorderMode, int);
template Plane<double> convolve_box_filter_t<double>(const IntegralImage&, const BoxFilterSpec&,
                                                     BorderMode, int);

GrayImage convolve_box_filter(const IntegralImage& ii, const BoxFilterSpec& spec, int threads) {
  return convolve_box_filter_t<float>(ii, spec, BorderMode::Truncate, threads);
}

namespace {

/// Adds v over the in-bounds rectangle [r0,r1] x [c0,c1] of the (H+1)x(W+1)
/// difference array.
inline void diff_add(Plane<double>& d, Eigen::Index r0, Eigen::Index r1,
                     Eigen::Index c0, Eigen::Index c1, double v) {
  d(r0, c0) += v;
  d(r0, c1 + 1) -= v;
  d(r1 + 1, c0) -= v;
  d(r1 + 1, c1 + 1) += v;
}

}  // namespace

Plane<double> convolve_box_filter_adjoint(const BoxFilterSpec& spec, const Plane<double>& seed,
                                          BorderMode mode) {
  const Eigen::Index H = seed.rows(), W = seed.cols();
  Plane<double> diff = Plane<double>::Zero(H + 1, W + 1);
  for (Eigen::Index y = 0; y < H; ++y)
    for (Eigen::Index x = 0; x < W; ++x) {
      const double sv = seed(y, x);
      if (sv == 0.0) continue;
      for (const FilterBox& b : spec.boxes) {
        const double v = b.weight * sv;
        const Eigen::Index row = y + b.row_offset, col = x + b.col_offset;
        if (mode == BorderMode::Truncate) {
          const Eigen::Index r0 = std::max<Eigen::Index>(row, 0);
          const Eigen::Index c0 = std::max<Eigen::Index>(col, 0);
          const Eigen::Index r1 = std::min(row + b.box_height - 1, H - 1);
          const Eigen::Index c1 = std::min(col + b.box_width - 1, W - 1);
          if (r1 < r0 || c1 < c0) continue;
          diff_add(diff, r0, r1, c0, c1, v);
        } else {
          const auto s = replicate_spans(row, col, b.box_height, b.box_width, H, W);
          const bool rows_mid = s.ra <= s.rb, cols_mid = s.ca <= s.cb;
          if (s.kt > 0) {
            if (s.kl > 0) diff_add(diff, 0, 0, 0, 0, v * double(s.kt) * double(s.kl));
            if (cols_mid) diff_add(diff, 0, 0, s.ca, s.cb, v * double(s.kt));
            if (s.kr > 0) diff_add(diff, 0, 0, W - 1, W - 1, v * double(s.kt) * double(s.kr));
          }
          if (rows_mid) {
            if (s.kl > 0) diff_add(diff, s.ra, s.rb, 0, 0, v * double(s.kl));
            if (cols_mid) diff_add(diff, s.ra, s.rb, s.ca, s.cb, v);
            if (s.kr > 0) diff_add(diff, s.ra, s.rb, W - 1, W - 1, v * double(s.kr));
          }
          if (s.kb > 0) {
            if (s.kl > 0) diff_add(diff, H - 1, H - 1, 0, 0, v * double(s.kb) * double(s.kl));
            if (cols_mid) diff_add(diff, H - 1, H - 1, s.ca, s.cb, v * double(s.kb));
            if (s.kr > 0)
              diff_add(diff, H - 1, H - 1, W - 1, W - 1, v * double(s.kb) * double(s.kr));
          }
        }
      }
    }

  // Prefix-sum the difference array back into a gradient plane.
  Plane<double> grad(H, W);
  for (Eigen::Index y = 0; y < H; ++y) {
    double rs = 0.0;
    for (Eigen::Index x = 0; x < W; ++x) {
      rs += diff(y, x);
      grad(y, x) = rs + (y > 0 ? grad(y - 1, x) : 0.0);
    }
  }
  return grad;
}

}  // namespace dsf
