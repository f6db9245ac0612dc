#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dsf/config.hpp"
#include "dsf/core/plane.hpp"
#include "dsf/descriptor.hpp"
#include "dsf/detector.hpp"

namespace dsf {

struct Match {
  int index_a = 0;
  int index_b = 0;
  double distance = 0.0;  // L2 descriptor distance
  double ratio = 0.0;     // best / second-best distance
};

/// Nearest-neighbour matching with Lowe's ratio test, restricted to
/// keypoints of equal laplacian sign. Ties break to the lower b index.
/// With no second neighbour the ratio is 0 (accept); with a zero-distance
/// second neighbour it is 1 (ambiguous, reject for thresholds < 1).
std::vector<Match> match_descriptors(const std::vector<Descriptor>& desc_a,
                                     const std::vector<Descriptor>& desc_b,
                                     const std::vector<Keypoint>& kps_a,
                                     const std::vector<Keypoint>& kps_b, double ratio_threshold,
                                     int threads = 1);

struct VerificationResult {
  Eigen::Matrix3d model;      // homography, h33 = 1
  std::vector<int> inliers;   // indices into the match list
  int inlier_count = 0;
  double rms_residual = 0.0;  // pixels, over inliers
};

/// Normalised-DLT homography fit from point correspondences (>= 4).
Eigen::Matrix3d fit_homography(const std::vector<Eigen::Vector2d>& pts_a,
                               const std::vector<Eigen::Vector2d>& pts_b);

/// RMS of the forward and backward transfer distances of one
/// correspondence under H, in pixels.
double symmetric_transfer_error(const Eigen::Matrix3d& h, const Eigen::Matrix3d& h_inv,
                                const Eigen::Vector2d& pa, const Eigen::Vector2d& pb);

/// Seeded RANSAC over 4-point DLT hypotheses with an adaptive iteration
/// cap, followed by a normalised-DLT refit over the best inlier set.
/// Deterministic for a given rng_seed. Throws on fewer than 4 matches or a
/// degenerate (collinear) final inlier set.
VerificationResult ransac_verify(const std::vector<Match>& matches,
                                 const std::vector<Keypoint>& kps_a,
                                 const std::vector<Keypoint>& kps_b, double threshold_px,
                                 int max_iters, double confidence, std::uint64_t rng_seed);

struct StageTimings {
  double detect_ms = 0.0;
  double describe_ms = 0.0;
  double match_ms = 0.0;
  double ransac_ms = 0.0;
  double total_ms = 0.0;
};

struct PairReport {
  int keypoints_a = 0;
  int keypoints_b = 0;
  int match_count = 0;
  int inlier_count = 0;
  double rms_residual = 0.0;
  bool ransac_ok = false;      // a model was estimated
  bool verified = false;       // inlier_count >= min_inliers
  Eigen::Matrix3d model = Eigen::Matrix3d::Identity();
  StageTimings timings;

  // Stage artifacts, kept for visualisation; not serialised.
  std::vector<Keypoint> kps_a, kps_b;
  std::vector<Match> matches;
  std::vector<int> inliers;

  /// JSON serialisation; timings live in their own object so the rest of
  /// the payload stays byte-stable across runs.
  std::string to_json(bool include_timings = true) const;
};

/// detect -> describe -> match -> verify on one image pair.
PairReport evaluate_pair(const GrayImage& img_a, const GrayImage& img_b, const RunConfig& cfg,
                         int threads = 1);

/// Side-by-side visualisation with inlier matches drawn; written as PNG.
void save_match_visualisation(const GrayImage& img_a, const GrayImage& img_b,
                              const std::vector<Keypoint>& kps_a,
                              const std::vector<Keypoint>& kps_b,
                              const std::vector<Match>& matches, const std::vector<int>& inliers,
                              const std::filesystem::path& path);

}  // namespace dsf
