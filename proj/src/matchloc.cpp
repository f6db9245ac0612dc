#include "dsf/matchloc.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#include "dsf/core/image_io.hpp"
#include "dsf/core/rng.hpp"
#include "dsf/core/threading.hpp"

namespace dsf {

std::vector<Match> match_descriptors(const std::vector<Descriptor>& desc_a,
                                     const std::vector<Descriptor>& desc_b,
                                     const std::vector<Keypoint>& kps_a,
                                     const std::vector<Keypoint>& kps_b, double ratio_threshold,
                                     int threads) {
  if (desc_a.size() != kps_a.size() || desc_b.size() != kps_b.size())
    throw std::invalid_argument("match_descriptors: descriptor/keypoint list mismatch");

  const int na = static_cast<int>(desc_a.size());
  const int nb = static_cast<int>(desc_b.size());
  std::vector<Match> slots(static_cast<std::size_t>(std::max(na, 0)));
  std::vector<char> has(static_cast<std::size_t>(std::max(na, 0)), 0);

  auto run = [&](Eigen::Index a0, Eigen::Index a1) {
    for (Eigen::Index ia = a0; ia < a1; ++ia) {
      const int sign = kps_a[static_cast<std::size_t>(ia)].laplacian_sign;
      int best = -1, second = -1;
      double best_d = std::numeric_limits<double>::infinity();
      double second_d = std::numeric_limits<double>::infinity();
      for (int ib = 0; ib < nb; ++ib) {
        if (kps_b[static_cast<std::size_t>(ib)].laplacian_sign != sign) continue;
        const double d = (desc_a[static_cast<std::size_t>(ia)].cast<double>() -
                          desc_b[static_cast<std::size_t>(ib)].cast<double>())
                             .norm();
        if (d < best_d) {
          second = best;
          second_d = best_d;
          best = ib;
          best_d = d;
        } else if (d < second_d) {
          second = ib;
          second_d = d;
        }
      }
      if (best < 0) continue;
      double ratio;
      if (second < 0)
        ratio = 0.0;
      else if (second_d > 0.0)
        ratio = best_d / second_d;
      else
        ratio = 1.0;
      if (!(ratio < ratio_threshold)) continue;
      Match m;
      m.index_a = static_cast<int>(ia);
      m.index_b = best;
      m.distance = best_d;
      m.ratio = ratio;
      slots[static_cast<std::size_t>(ia)] = m;
      has[static_cast<std::size_t>(ia)] = 1;
    }
  };
  parallel_for_rows(na, threads, run);

  std::vector<Match> out;
  out.reserve(static_cast<std::size_t>(na));
  for (int ia = 0; ia < na; ++ia)
    if (has[static_cast<std::size_t>(ia)]) out.push_back(slots[static_cast<std::size_t>(ia)]);
  return out;
}

namespace {

/// Hartley normalisation: centroid to origin, mean distance sqrt(2).
Eigen::Matrix3d normalising_transform(const std::vector<Eigen::Vector2d>& pts) {
  Eigen::Vector2d c = Eigen::Vector2d::Zero();
  for (const auto& p : pts) c += p;
  c /= static_cast<double>(pts.size());
  double mean_dist = 0.0;
  for (const auto& p : pts) mean_dist += (p - c).norm();
  mean_dist /= static_cast<double>(pts.size());
  const double s = mean_dist > 0.0 ? std::sqrt(2.0) / mean_dist : 1.0;
  Eigen::Matrix3d t;
  t << s, 0, -s * c.x(), 0, s, -s * c.y(), 0, 0, 1;
  return t;
}

bool collinear(const std::vector<Eigen::Vector2d>& pts) {
  if (pts.size() < 3) return true;
  // Smallest eigenvalue of the 2x2 scatter matrix, relative to the spread.
  Eigen::Vector2d c = Eigen::Vector2d::Zero();
  for (const auto& p : pts) c += p;
  c /= static_cast<double>(pts.size());
  Eigen::Matrix2d m = Eigen::Matrix2d::Zero();
  for (const auto& p : pts) m += (p - c) * (p - c).transpose();
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(m);
  const double lmin = es.eigenvalues()(0), lmax = es.eigenvalues()(1);
  return !(lmin > 1e-8 * std::max(lmax, 1.0));
}

Eigen::Vector2d project(const Eigen::Matrix3d& h, const Eigen::Vector2d& p) {
  const Eigen::Vector3d q = h * p.homogeneous();
  return q.hnormalized();
}

}  // namespace

Eigen::Matrix3d fit_homography(const std::vector<Eigen::Vector2d>& pts_a,
                               const std::vector<Eigen::Vector2d>& pts_b) {
  const std::size_t n = pts_a.size();
  if (n < 4 || pts_b.size() != n)
    throw std::invalid_argument("fit_homography: need >= 4 correspondences");
  const Eigen::Matrix3d ta = normalising_transform(pts_a);
  const Eigen::Matrix3d tb = normalising_transform(pts_b);

  Eigen::MatrixXd a(2 * n, 9);
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector2d pa = project(ta, pts_a[i]);
    const Eigen::Vector2d pb = project(tb, pts_b[i]);
    const double x = pa.x(), y = pa.y(), u = pb.x(), v = pb.y();
    a.row(static_cast<Eigen::Index>(2 * i)) << -x, -y, -1, 0, 0, 0, u * x, u * y, u;
    a.row(static_cast<Eigen::Index>(2 * i + 1)) << 0, 0, 0, -x, -y, -1, v * x, v * y, v;
  }
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::Matrix<double, 9, 1> hv = svd.matrixV().col(8);
  Eigen::Matrix3d hn;
  hn << hv(0), hv(1), hv(2), hv(3), hv(4), hv(5), hv(6), hv(7), hv(8);
  Eigen::Matrix3d h = tb.inverse() * hn * ta;
  if (std::abs(h(2, 2)) < 1e-12 * h.norm())
    throw std::runtime_error("fit_homography: degenerate solution (h33 ~ 0)");
  return h / h(2, 2);
}

double symmetric_transfer_error(const Eigen::Matrix3d& h, const Eigen::Matrix3d& h_inv,
                                const Eigen::Vector2d& pa, const Eigen::Vector2d& pb) {
  const double d_fwd = (project(h, pa) - pb).squaredNorm();
  const double d_bwd = (project(h_inv, pb) - pa).squaredNorm();
  return std::sqrt(0.5 * (d_fwd + d_bwd));
}

VerificationResult ransac_verify(const std::vector<Match>& matches,
                                 const std::vector<Keypoint>& kps_a,
                                 const std::vector<Keypoint>& kps_b, double threshold_px,
                                 int max_iters, double confidence, std::uint64_t rng_seed) {
  const int n = static_cast<int>(matches.size());
  if (n < 4) throw std::invalid_argument("ransac_verify: need at least 4 matches");

  std::vector<Eigen::Vector2d> pa(static_cast<std::size_t>(n)), pb(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const Keypoint& ka = kps_a[static_cast<std::size_t>(matches[static_cast<std::size_t>(i)].index_a)];
    const Keypoint& kb = kps_b[static_cast<std::size_t>(matches[static_cast<std::size_t>(i)].index_b)];
    pa[static_cast<std::size_t>(i)] = {static_cast<double>(ka.x), static_cast<double>(ka.y)};
    pb[static_cast<std::size_t>(i)] = {static_cast<double>(kb.x), static_cast<double>(kb.y)};
  }

  auto score = [&](const Eigen::Matrix3d& h, std::vector<int>& inliers, double& rms) -> bool {
    if (std::abs(h.determinant()) < 1e-12) return false;
    const Eigen::Matrix3d h_inv = h.inverse();
    inliers.clear();
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      const double e = symmetric_transfer_error(h, h_inv, pa[static_cast<std::size_t>(i)],
                                                pb[static_cast<std::size_t>(i)]);
      if (e <= threshold_px) {
        inliers.push_back(i);
        acc += e * e;
      }
    }
    rms = inliers.empty() ? 0.0 : std::sqrt(acc / static_cast<double>(inliers.size()));
    return true;
  };

  Rng rng(rng_seed);
  Eigen::Matrix3d best_model = Eigen::Matrix3d::Identity();
  std::vector<int> best_inliers;
  double best_rms = std::numeric_limits<double>::infinity();
  bool have_model = false;

  long iter_cap = max_iters;
  std::vector<Eigen::Vector2d> sa(4), sb(4);
  for (long iter = 0; iter < iter_cap; ++iter) {
    // Sample 4 distinct match indices.
    int idx[4];
    for (int k = 0; k < 4;) {
      const int cand = static_cast<int>(rng.bounded(static_cast<std::uint64_t>(n)));
      bool dup = false;
      for (int j = 0; j < k; ++j) dup = dup || idx[j] == cand;
      if (!dup) idx[k++] = cand;
    }
    for (int k = 0; k < 4; ++k) {
      sa[static_cast<std::size_t>(k)] = pa[static_cast<std::size_t>(idx[k])];
      sb[static_cast<std::size_t>(k)] = pb[static_cast<std::size_t>(idx[k])];
    }
    if (collinear(sa) || collinear(sb)) continue;

    Eigen::Matrix3d h;
    try {
      h = fit_homography(sa, sb);
    } catch (const std::exception&) {
      continue;
    }
    std::vector<int> inliers;
    double rms = 0.0;
    if (!score(h, inliers, rms)) continue;
    if (inliers.size() > best_inliers.size() ||
        (inliers.size() == best_inliers.size() && rms < best_rms)) {
      best_model = h;
      best_inliers = std::move(inliers);
      best_rms = rms;
      have_model = true;
      // Standard adaptive cap from the inlier ratio.
      const double w = static_cast<double>(best_inliers.size()) / static_cast<double>(n);
      const double p_outlier_free = std::pow(w, 4);
      long needed = max_iters;
      if (p_outlier_free >= 1.0 - 1e-12) {
        needed = 1;
      } else if (p_outlier_free > 0.0) {
        const double k = std::log(1.0 - confidence) / std::log(1.0 - p_outlier_free);
        needed = static_cast<long>(std::ceil(std::max(1.0, k)));
      }
      iter_cap = std::min<long>(iter_cap, std::max<long>(iter + 1, needed));
    }
  }
  if (!have_model || best_inliers.size() < 4)
    throw std::runtime_error("ransac_verify: no valid hypothesis found");

  // Least-squares refit over the consensus set, then rescore against the
  // refit model so the reported inliers satisfy the threshold post hoc.
  std::vector<Eigen::Vector2d> ia, ib;
  ia.reserve(best_inliers.size());
  ib.reserve(best_inliers.size());
  for (int i : best_inliers) {
    ia.push_back(pa[static_cast<std::size_t>(i)]);
    ib.push_back(pb[static_cast<std::size_t>(i)]);
  }
  if (collinear(ia) || collinear(ib))
    throw std::runtime_error("ransac_verify: degenerate (collinear) final inlier set");
  const Eigen::Matrix3d refit = fit_homography(ia, ib);

  VerificationResult res;
  std::vector<int> final_inliers;
  double final_rms = 0.0;
  if (score(refit, final_inliers, final_rms) && final_inliers.size() >= best_inliers.size()) {
    res.model = refit;
    res.inliers = std::move(final_inliers);
    res.rms_residual = final_rms;
  } else {
    // Refit made things worse (rare, near-degenerate geometry); keep the
    // hypothesis model.
    res.model = best_model;
    res.inliers = best_inliers;
    res.rms_residual = best_rms;
  }
  res.inlier_count = static_cast<int>(res.inliers.size());
  return res;
}

PairReport evaluate_pair(const GrayImage& img_a, const GrayImage& img_b, const RunConfig& cfg,
                         int threads) {
  using clock = std::chrono::steady_clock;
  const auto ms_since = [](clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(clock::now() - t0).count();
  };
  validate(cfg);

  PairReport rep;
  const auto t_total = clock::now();
  const std::vector<ScaleSpec> scales = scales_from_sizes(cfg.active_filter_sizes());
  const std::vector<DescriptorLUT> luts = build_luts(scales);

  auto t0 = clock::now();
  const ResponsePyramid pyr_a = detector_response(img_a, scales, threads);
  const ResponsePyramid pyr_b = detector_response(img_b, scales, threads);
  const std::vector<Keypoint> kps_a =
      extract_keypoints(pyr_a, static_cast<float>(cfg.detection_threshold));
  const std::vector<Keypoint> kps_b =
      extract_keypoints(pyr_b, static_cast<float>(cfg.detection_threshold));
  rep.timings.detect_ms = ms_since(t0);
  rep.keypoints_a = static_cast<int>(kps_a.size());
  rep.keypoints_b = static_cast<int>(kps_b.size());

  t0 = clock::now();
  const std::vector<DenseDescriptorMap> maps_a = dense_descriptor_pyramid(img_a, scales, luts, threads);
  const std::vector<DenseDescriptorMap> maps_b = dense_descriptor_pyramid(img_b, scales, luts, threads);
  const std::vector<Descriptor> desc_a = describe_keypoints(maps_a, kps_a);
  const std::vector<Descriptor> desc_b = describe_keypoints(maps_b, kps_b);
  rep.timings.describe_ms = ms_since(t0);

  t0 = clock::now();
  const std::vector<Match> matches =
      match_descriptors(desc_a, desc_b, kps_a, kps_b, cfg.ratio_threshold, threads);
  rep.timings.match_ms = ms_since(t0);
  rep.match_count = static_cast<int>(matches.size());

  t0 = clock::now();
  if (matches.size() >= 4) {
    try {
      const VerificationResult v =
          ransac_verify(matches, kps_a, kps_b, cfg.ransac_threshold_px, cfg.ransac_max_iters,
                        cfg.ransac_confidence, cfg.rng_seed);
      rep.ransac_ok = true;
      rep.inlier_count = v.inlier_count;
      rep.rms_residual = v.rms_residual;
      rep.model = v.model;
      rep.inliers = v.inliers;
    } catch (const std::exception&) {
      rep.ransac_ok = false;
    }
  }
  rep.timings.ransac_ms = ms_since(t0);
  rep.verified = rep.ransac_ok && rep.inlier_count >= cfg.min_inliers;
  rep.timings.total_ms = ms_since(t_total);
  rep.kps_a = kps_a;
  rep.kps_b = kps_b;
  rep.matches = matches;
  return rep;
}

std::string PairReport::to_json(bool include_timings) const {
  nlohmann::ordered_json j;
  j["keypoints_a"] = keypoints_a;
  j["keypoints_b"] = keypoints_b;
  j["match_count"] = match_count;
  j["inlier_count"] = inlier_count;
  j["rms_residual"] = rms_residual;
  j["ransac_ok"] = ransac_ok;
  j["verified"] = verified;
  nlohmann::ordered_json m = nlohmann::ordered_json::array();
  for (int r = 0; r < 3; ++r) {
    nlohmann::ordered_json row = nlohmann::ordered_json::array();
    for (int c = 0; c < 3; ++c) row.push_back(model(r, c));
    m.push_back(row);
  }
  j["model"] = m;
  if (include_timings) {
    j["timings_ms"] = {{"detect", timings.detect_ms},
                       {"describe", timings.describe_ms},
                       {"match", timings.match_ms},
                       {"ransac", timings.ransac_ms},
                       {"total", timings.total_ms}};
  }
  return j.dump(2);
}

void save_match_visualisation(const GrayImage& img_a, const GrayImage& img_b,
                              const std::vector<Keypoint>& kps_a,
                              const std::vector<Keypoint>& kps_b,
                              const std::vector<Match>& matches, const std::vector<int>& inliers,
                              const std::filesystem::path& path) {
  const Eigen::Index h = std::max(img_a.rows(), img_b.rows());
  const Eigen::Index w = img_a.cols() + img_b.cols();
  GrayImage canvas = GrayImage::Zero(h, w);
  canvas.block(0, 0, img_a.rows(), img_a.cols()) = img_a;
  canvas.block(0, img_a.cols(), img_b.rows(), img_b.cols()) = img_b;
  RgbImage rgb = to_rgb(canvas);

  auto mark = [&](Eigen::Index y, Eigen::Index x, unsigned char r, unsigned char g,
                  unsigned char b) {
    for (Eigen::Index dy = -1; dy <= 1; ++dy)
      for (Eigen::Index dx = -1; dx <= 1; ++dx) {
        const Eigen::Index yy = y + dy, xx = x + dx;
        if (yy >= 0 && yy < rgb.height && xx >= 0 && xx < rgb.width) {
          unsigned char* p = rgb.px(yy, xx);
          p[0] = r;
          p[1] = g;
          p[2] = b;
        }
      }
  };
  for (const Keypoint& k : kps_a) mark(k.y, k.x, 220, 60, 60);
  for (const Keypoint& k : kps_b) mark(k.y, k.x + img_a.cols(), 220, 60, 60);
  for (int mi : inliers) {
    const Match& m = matches[static_cast<std::size_t>(mi)];
    const Keypoint& ka = kps_a[static_cast<std::size_t>(m.index_a)];
    const Keypoint& kb = kps_b[static_cast<std::size_t>(m.index_b)];
    draw_line(rgb, ka.y, ka.x, kb.y, kb.x + img_a.cols(), 70, 110, 230);
  }
  save_png_rgb(rgb, path);
}

}  // namespace dsf
