#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace dsf {

/// Run-wide parameters with their defaults. Loss weights default to the
/// (8, 2, 2, 1) operating point; the scale ladder to the 5-entry
/// {9,15,21,27,33} progression.
struct RunConfig {
  int scales = 5;
  std::vector<int> filter_sizes = {9, 15, 21, 27, 33};
  double detection_threshold = 2e-4;
  double ratio_threshold = 0.8;
  double ransac_threshold_px = 3.0;
  double ransac_confidence = 0.999;
  int ransac_max_iters = 2000;
  std::uint64_t rng_seed = 42;
  double lambda_rec = 8.0;
  double lambda_det = 2.0;
  double lambda_desc = 2.0;
  double lambda_adv = 1.0;
  int min_inliers = 8;

  /// The first `scales` entries of filter_sizes.
  std::vector<int> active_filter_sizes() const;
};

/// Validates invariants: positive thresholds, scales >= 1 and covered by
/// filter_sizes, non-negative weights, filter sizes odd multiples of 3.
void validate(const RunConfig& cfg);

/// Parses a JSON config file. Unknown keys are rejected.
RunConfig read_config(const std::filesystem::path& path);

/// Parses config from a JSON string (used by read_config and tests).
RunConfig parse_config(const std::string& json_text);

std::string config_to_json(const RunConfig& cfg);

}  // namespace dsf
