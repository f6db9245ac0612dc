#include "dsf/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dsf/core/rng.hpp"

namespace dsf {

namespace {

inline double sgn(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

Plane<double> det_map_d(const Plane<double>& img, const ScaleSpec& spec) {
  return detail::detector_maps<double>(integral(img), spec).det;
}

}  // namespace

ImageGradient detector_vjp(const GrayImage& img, const ScaleSpec& spec, const DetectorSeed& seed) {
  if (!same_shape(img, seed)) throw std::invalid_argument("detector_vjp: seed shape mismatch");
  const auto maps = detail::detector_maps<double>(integral(img), spec);

  // det = lxx . lyy - 0.81 lxy^2; product-rule adjoints per response map.
  const Plane<double> a_xx = seed * maps.lyy;
  const Plane<double> a_yy = seed * maps.lxx;
  const Plane<double> a_xy = -1.62 * seed * maps.lxy;

  const HessianFilters f = hessian_filters(spec);
  Plane<double> g = convolve_box_filter_adjoint(f.dxx, a_xx, BorderMode::Truncate);
  g += convolve_box_filter_adjoint(f.dyy, a_yy, BorderMode::Truncate);
  g += convolve_box_filter_adjoint(f.dxy, a_xy, BorderMode::Truncate);
  return g;
}

ImageGradient descriptor_vjp(const GrayImage& img, const ScaleSpec& spec, const DescriptorLUT& lut,
                             const DescriptorSeed& seed) {
  const Eigen::Index H = img.rows(), W = img.cols();
  if (seed.size() != 64) throw std::invalid_argument("descriptor_vjp: seed must have 64 planes");
  for (const auto& s : seed)
    if (s.rows() != H || s.cols() != W)
      throw std::invalid_argument("descriptor_vjp: seed shape mismatch");

  const detail::DenseForwardD fwd = detail::dense_forward_d(img, spec, lut);

  Plane<double> g_dx = Plane<double>::Zero(H, W);
  Plane<double> g_dy = Plane<double>::Zero(H, W);

  double u[64], sv[64], gu[64];
  for (Eigen::Index y = 0; y < H; ++y)
    for (Eigen::Index x = 0; x < W; ++x) {
      const double r = fwd.norm(y, x);
      if (r == 0.0) continue;  // zero vectors propagate zero
      for (int c = 0; c < 64; ++c) {
        u[c] = fwd.unnormalized[static_cast<std::size_t>(c)](y, x);
        sv[c] = seed[static_cast<std::size_t>(c)](y, x);
      }
      // d(v / |v|) adjoint: (s - vhat (vhat . s)) / |v|.
      double dot = 0.0;
      for (int c = 0; c < 64; ++c) dot += u[c] * sv[c];
      dot /= (r * r);
      bool any = false;
      for (int c = 0; c < 64; ++c) {
        gu[c] = (sv[c] - u[c] * dot) / r;
        any = any || gu[c] != 0.0;
      }
      if (!any) continue;
      for (int n = 0; n < 16; ++n) {
        const PixelOffset cen = lut.centers[static_cast<std::size_t>(n)];
        const double nw = lut.neighbourhood_weights[static_cast<std::size_t>(n)];
        const double g0 = gu[4 * n + 0], g1 = gu[4 * n + 1];
        const double g2 = gu[4 * n + 2], g3 = gu[4 * n + 3];
        for (int k = 0; k < 81; ++k) {
          const PixelOffset o = lut.offsets[static_cast<std::size_t>(k)];
          const Eigen::Index qy = clamp_index(y + cen.dy + o.dy, H);
          const Eigen::Index qx = clamp_index(x + cen.dx + o.dx, W);
          const double w = nw * lut.sample_weights[static_cast<std::size_t>(k)];
          g_dx(qy, qx) += w * (g0 + sgn(fwd.dx_map(qy, qx)) * g2);
          g_dy(qy, qx) += w * (g1 + sgn(fwd.dy_map(qy, qx)) * g3);
        }
      }
    }

  Plane<double> g = convolve_box_filter_adjoint(haar_x_spec(lut.step), g_dx, BorderMode::Replicate);
  g += convolve_box_filter_adjoint(haar_y_spec(lut.step), g_dy, BorderMode::Replicate);
  return g;
}

// ---------------------------------------------------------------------------
// gradcheck harness
// ---------------------------------------------------------------------------

namespace {

constexpr double kKinkEps = 1e-4;
constexpr double kDirScale = 0.01;  // keeps perturbations well inside the kink margin
// Dot tests probe with smaller directions still: differencing truncation
// through the normalisation curvature falls quadratically with the probe
// scale, and the 1e-6 tolerance needs that headroom.
constexpr double kDotDirScale = 0.003;

Plane<double> random_direction(Eigen::Index h, Eigen::Index w, Rng& rng, double scale = kDirScale) {
  return random_plane<double>(h, w, rng, -scale, scale);
}

double rel_err(double a, double b) {
  const double den = std::max({std::abs(a), std::abs(b), 1e-12});
  return std::abs(a - b) / den;
}

}  // namespace

namespace detail {

Plane<double> descriptor_fd_mask(const DenseForwardD& fwd, const DescriptorLUT& lut,
                                 long& excluded) {
  const Eigen::Index H = fwd.norm.rows(), W = fwd.norm.cols();
  Plane<double> resp_ok(H, W);
  for (Eigen::Index y = 0; y < H; ++y)
    for (Eigen::Index x = 0; x < W; ++x)
      resp_ok(y, x) = (std::abs(fwd.dx_map(y, x)) >= kKinkEps &&
                       std::abs(fwd.dy_map(y, x)) >= kKinkEps)
                          ? 1.0
                          : 0.0;
  Plane<double> mask(H, W);
  excluded = 0;
  for (Eigen::Index y = 0; y < H; ++y)
    for (Eigen::Index x = 0; x < W; ++x) {
      bool ok = fwd.norm(y, x) >= kKinkEps;
      for (int n = 0; n < 16 && ok; ++n) {
        const PixelOffset cen = lut.centers[static_cast<std::size_t>(n)];
        for (int k = 0; k < 81; ++k) {
          const PixelOffset o = lut.offsets[static_cast<std::size_t>(k)];
          if (resp_ok(clamp_index(y + cen.dy + o.dy, H), clamp_index(x + cen.dx + o.dx, W)) ==
              0.0) {
            ok = false;
            break;
          }
        }
      }
      mask(y, x) = ok ? 1.0 : 0.0;
      if (!ok) ++excluded;
    }
  return mask;
}

GradcheckTrial descriptor_fd_trial(const GrayImage& img, const ScaleSpec& spec,
                                   const DescriptorLUT& lut, Rng& rng, double h,
                                   double threshold, int directions) {
  const Eigen::Index H = img.rows(), W = img.cols();
  const Plane<double> base = img.cast<double>();
  const DenseForwardD fwd = dense_forward_d(base, spec, lut);

  GradcheckTrial tr;
  const Plane<double> mask = descriptor_fd_mask(fwd, lut, tr.excluded_coords);
  if (mask.sum() == 0.0) {
    tr.status = "skipped_degenerate";
    return tr;
  }

  DescriptorSeed seed(64);
  for (auto& s : seed) s = random_plane<double>(H, W, rng, -1.0, 1.0) * mask;
  const ImageGradient g = descriptor_vjp(img, spec, lut, seed);

  for (int d = 0; d < directions; ++d) {
    const Plane<double> v = random_direction(H, W, rng);
    const auto fp = dense_forward_d(Plane<double>(base + h * v), spec, lut).channels;
    const auto fm = dense_forward_d(Plane<double>(base - h * v), spec, lut).channels;
    double lhs = 0.0;
    for (int c = 0; c < 64; ++c)
      lhs += (seed[static_cast<std::size_t>(c)] *
              (fp[static_cast<std::size_t>(c)] - fm[static_cast<std::size_t>(c)]))
                 .sum();
    lhs /= 2.0 * h;
    const double rhs = (v * g).sum();
    tr.max_rel_err = std::max(tr.max_rel_err, rel_err(lhs, rhs));
  }
  tr.status = tr.max_rel_err < threshold ? "pass" : "fail";
  return tr;
}

}  // namespace detail

namespace {

GradcheckOpReport check_detector(int trials, Rng& rng) {
  GradcheckOpReport rep;
  rep.op = "detector";
  rep.dot_test_run = true;
  const int sizes[2] = {9, 15};
  for (int t = 0; t < trials; ++t) {
    const ScaleSpec spec = make_scale(sizes[t % 2]);
    const Eigen::Index n = 24;
    const GrayImage img = random_plane<float>(n, n, rng);
    const Plane<double> base = img.cast<double>();
    const Plane<double> seed = random_plane<double>(n, n, rng, -1.0, 1.0);
    const ImageGradient g = detector_vjp(img, spec, seed);

    GradcheckTrial tr;
    tr.trial = t;
    const double h = rep.fd_step;
    for (int d = 0; d < 20; ++d) {
      const Plane<double> v = random_direction(n, n, rng);
      const Plane<double> fp = det_map_d(base + h * v, spec);
      const Plane<double> fm = det_map_d(base - h * v, spec);
      const double lhs = (seed * (fp - fm)).sum() / (2.0 * h);
      const double rhs = (v * g).sum();
      tr.max_rel_err = std::max(tr.max_rel_err, rel_err(lhs, rhs));
    }
    tr.status = tr.max_rel_err < rep.fd_threshold ? "pass" : "fail";
    rep.pass = rep.pass && tr.status == "pass";
    rep.trials.push_back(tr);
  }
  // Adjoint (dot-product) consistency at the tighter tolerance. The det
  // map is quadratic in the image, so central differencing has no
  // truncation error at any probe scale; a large probe on a mean-centred
  // image keeps the differencing signal far above forward rounding noise.
  {
    const ScaleSpec spec = make_scale(9);
    const Eigen::Index n = 24;
    GrayImage img = random_plane<float>(n, n, rng);
    img -= img.mean();
    const Plane<double> base = img.cast<double>();
    const Plane<double> seed = random_plane<double>(n, n, rng, -1.0, 1.0);
    const ImageGradient g = detector_vjp(img, spec, seed);
    const double h = rep.dot_step;
    for (int d = 0; d < 5; ++d) {
      const Plane<double> v = random_direction(n, n, rng, 0.1);
      const Plane<double> jvp =
          (det_map_d(base + h * v, spec) - det_map_d(base - h * v, spec)) / (2.0 * h);
      rep.dot_max_rel_err =
          std::max(rep.dot_max_rel_err, rel_err((jvp * seed).sum(), (v * g).sum()));
    }
    rep.pass = rep.pass && rep.dot_max_rel_err < rep.dot_threshold;
  }
  return rep;
}

GradcheckOpReport check_descriptor(int trials, Rng& rng) {
  GradcheckOpReport rep;
  rep.op = "descriptor";
  rep.dot_test_run = true;
  const ScaleSpec spec = make_scale(9);
  const DescriptorLUT lut = build_lut(spec);
  // Large enough that one kinked response pixel cannot blanket the whole
  // exclusion mask (the footprint dilation spans 27 pixels).
  const Eigen::Index n = 32;

  for (int t = 0; t < trials; ++t) {
    GradcheckTrial tr;
    // Occasional draws mask out completely (kinks near the image centre);
    // those carry no checkable coordinates, so redraw.
    for (int attempt = 0; attempt < 50; ++attempt) {
      const GrayImage img = random_plane<float>(n, n, rng);
      tr = detail::descriptor_fd_trial(img, spec, lut, rng, rep.fd_step, rep.fd_threshold, 20);
      if (tr.status != "skipped_degenerate") break;
    }
    tr.trial = t;
    rep.pass = rep.pass && tr.status == "pass";
    rep.trials.push_back(tr);
  }

  // Dot-product adjoint test on a fresh random image. The seed is further
  // restricted to pixels with a healthy pre-normalisation norm: the 1e-6
  // tolerance leaves no room for differencing truncation through the
  // 1/|v| curvature at small norms.
  {
    const double norm_floor = 3e-2;
    GrayImage img;
    Plane<double> mask;
    detail::DenseForwardD fwd;
    for (int attempt = 0; attempt < 50; ++attempt) {
      // Mean-centred probe image: responses are offset-invariant, and the
      // small integral-table magnitudes keep forward rounding noise well
      // below the differencing signal.
      img = random_plane<float>(n, n, rng);
      img -= img.mean();
      fwd = detail::dense_forward_d(Plane<double>(img.cast<double>()), spec, lut);
      long excl = 0;
      mask = detail::descriptor_fd_mask(fwd, lut, excl);
      for (Eigen::Index y = 0; y < n; ++y)
        for (Eigen::Index x = 0; x < n; ++x)
          if (fwd.norm(y, x) < norm_floor) mask(y, x) = 0.0;
      if (mask.sum() > 0.0) break;
    }
    const Plane<double> base = img.cast<double>();
    DescriptorSeed seed(64);
    for (auto& s : seed) s = random_plane<double>(n, n, rng, -1.0, 1.0) * mask;
    const ImageGradient g = descriptor_vjp(img, spec, lut, seed);
    const double h = rep.dot_step;
    for (int d = 0; d < 5; ++d) {
      const Plane<double> v = random_direction(n, n, rng, kDotDirScale);
      const auto fp = detail::dense_forward_d(Plane<double>(base + h * v), spec, lut).channels;
      const auto fm = detail::dense_forward_d(Plane<double>(base - h * v), spec, lut).channels;
      double lhs = 0.0;
      for (int c = 0; c < 64; ++c)
        lhs += (seed[static_cast<std::size_t>(c)] *
                (fp[static_cast<std::size_t>(c)] - fm[static_cast<std::size_t>(c)]))
                   .sum();
      lhs /= 2.0 * h;
      rep.dot_max_rel_err = std::max(rep.dot_max_rel_err, rel_err(lhs, (v * g).sum()));
    }
    rep.pass = rep.pass && rep.dot_max_rel_err < rep.dot_threshold;
  }
  return rep;
}

GradcheckOpReport check_losses(int trials, Rng& rng) {
  GradcheckOpReport rep;
  rep.op = "losses";
  const std::vector<ScaleSpec> scales = scales_from_sizes({9, 15});
  const std::vector<DescriptorLUT> luts = build_luts(scales);

  for (int t = 0; t < trials; ++t) {
    GradcheckTrial tr;
    tr.trial = t;
    const Eigen::Index n = 24;
    const GrayImage a = random_plane<float>(n, n, rng);
    // Every third trial uses an identical pair to exercise the kink case.
    const GrayImage b = (t % 3 == 2) ? a : random_plane<float>(n, n, rng);
    const Plane<double> base = a.cast<double>();
    const Plane<double> bd = b.cast<double>();

    if ((a == b).all()) {
      // Identical pair: every L1 term sits on the |.| kink; the reported
      // gradient is the subgradient-at-zero convention, not a derivative.
      tr.status = "subgradient_ambiguous";
      tr.excluded_coords = n * n;
      rep.trials.push_back(tr);
      continue;
    }

    // "Away from kinks": L1 coordinates whose base difference sits within
    // kKinkEps of the |.| kink are dropped from both the differenced loss
    // and the analytic gradient, and counted as excluded. Kept coordinates
    // cannot cross under the +-h*v perturbations used here.
    const double h = rep.fd_step;
    const double inv_rec = 1.0 / static_cast<double>(n * n);

    {  // rec
      const Plane<double> diff = base - bd;
      const Plane<double> keep = (diff.abs() >= kKinkEps).cast<double>();
      tr.excluded_coords += static_cast<long>(n * n - keep.sum());
      Plane<double> g(n, n);
      for (Eigen::Index y = 0; y < n; ++y)
        for (Eigen::Index x = 0; x < n; ++x)
          g(y, x) = keep(y, x) * (diff(y, x) > 0 ? inv_rec : -inv_rec);
      auto f = [&](const Plane<double>& im) {
        return (keep * (im - bd).abs()).sum() * inv_rec;
      };
      for (int d = 0; d < 8; ++d) {
        const Plane<double> v = random_direction(n, n, rng);
        const double lhs =
            (f(Plane<double>(base + h * v)) - f(Plane<double>(base - h * v))) / (2.0 * h);
        tr.max_rel_err = std::max(tr.max_rel_err, rel_err(lhs, (v * g).sum()));
      }
    }

    {  // det
      const double inv = inv_rec / static_cast<double>(scales.size());
      std::vector<Plane<double>> keeps;
      const IntegralImage ib = integral(bd);
      ImageGradient g = ImageGradient::Zero(n, n);
      for (const ScaleSpec& sp : scales) {
        const Plane<double> da = det_map_d(base, sp);
        const Plane<double> db = detail::detector_maps<double>(ib, sp).det;
        const Plane<double> diff = da - db;
        Plane<double> keep = (diff.abs() >= kKinkEps).cast<double>();
        tr.excluded_coords += static_cast<long>(n * n - keep.sum());
        Plane<double> seed(n, n);
        for (Eigen::Index y = 0; y < n; ++y)
          for (Eigen::Index x = 0; x < n; ++x)
            seed(y, x) = keep(y, x) * (diff(y, x) > 0 ? inv : -inv);
        g += detector_vjp(a, sp, seed);
        keeps.push_back(std::move(keep));
      }
      auto f = [&](const Plane<double>& im) {
        double acc = 0.0;
        for (std::size_t i = 0; i < scales.size(); ++i) {
          const Plane<double> da = det_map_d(im, scales[i]);
          const Plane<double> db = detail::detector_maps<double>(ib, scales[i]).det;
          acc += (keeps[i] * (da - db).abs()).sum();
        }
        return acc * inv;
      };
      for (int d = 0; d < 8; ++d) {
        const Plane<double> v = random_direction(n, n, rng);
        const double lhs =
            (f(Plane<double>(base + h * v)) - f(Plane<double>(base - h * v))) / (2.0 * h);
        tr.max_rel_err = std::max(tr.max_rel_err, rel_err(lhs, (v * g).sum()));
      }
    }

    {  // desc (single scale keeps the trial cheap)
      const ScaleSpec sp = scales[0];
      const DescriptorLUT& lut = luts[0];
      const double inv = inv_rec / 64.0;
      const detail::DenseForwardD fa = detail::dense_forward_d(base, sp, lut);
      const detail::DenseForwardD fb = detail::dense_forward_d(bd, sp, lut);
      // Also exclude pixels whose own |Haar| arguments or norms are kinked,
      // exactly as in the descriptor check.
      long fd_excluded = 0;
      const Plane<double> pix_ok = detail::descriptor_fd_mask(fa, lut, fd_excluded);
      DescriptorSeed seed(64);
      std::vector<Plane<double>> keeps(64);
      for (int c = 0; c < 64; ++c) {
        const Plane<double> diff = fa.channels[static_cast<std::size_t>(c)] -
                                   fb.channels[static_cast<std::size_t>(c)];
        Plane<double> keep = pix_ok * (diff.abs() >= kKinkEps).cast<double>();
        tr.excluded_coords += static_cast<long>(n * n - keep.sum());
        Plane<double> s(n, n);
        for (Eigen::Index y = 0; y < n; ++y)
          for (Eigen::Index x = 0; x < n; ++x)
            s(y, x) = keep(y, x) * (diff(y, x) > 0 ? inv : -inv);
        seed[static_cast<std::size_t>(c)] = std::move(s);
        keeps[static_cast<std::size_t>(c)] = std::move(keep);
      }
      const ImageGradient g = descriptor_vjp(a, sp, lut, seed);
      auto f = [&](const Plane<double>& im) {
        const auto ch = detail::dense_forward_d(im, sp, lut).channels;
        double acc = 0.0;
        for (int c = 0; c < 64; ++c)
          acc += (keeps[static_cast<std::size_t>(c)] *
                  (ch[static_cast<std::size_t>(c)] - fb.channels[static_cast<std::size_t>(c)])
                      .abs())
                     .sum();
        return acc * inv;
      };
      for (int d = 0; d < 8; ++d) {
        const Plane<double> v = random_direction(n, n, rng);
        const double lhs =
            (f(Plane<double>(base + h * v)) - f(Plane<double>(base - h * v))) / (2.0 * h);
        tr.max_rel_err = std::max(tr.max_rel_err, rel_err(lhs, (v * g).sum()));
      }
    }

    tr.status = tr.max_rel_err < rep.fd_threshold ? "pass" : "fail";
    rep.pass = rep.pass && tr.status == "pass";
    rep.trials.push_back(tr);
  }
  return rep;
}

}  // namespace

GradcheckReport gradcheck(const std::string& op_id, int trials, std::uint64_t rng_seed) {
  if (trials < 1) throw std::invalid_argument("gradcheck: trials must be >= 1");
  GradcheckReport rep;
  rep.rng_seed = rng_seed;
  rep.trials_requested = trials;
  Rng rng(rng_seed);
  if (op_id == "detector" || op_id == "all") rep.ops.push_back(check_detector(trials, rng));
  if (op_id == "descriptor" || op_id == "all") rep.ops.push_back(check_descriptor(trials, rng));
  if (op_id == "losses" || op_id == "all") rep.ops.push_back(check_losses(trials, rng));
  if (rep.ops.empty()) throw std::invalid_argument("gradcheck: unknown op '" + op_id + "'");
  for (const auto& op : rep.ops) rep.pass = rep.pass && op.pass;
  return rep;
}

}  // namespace dsf
