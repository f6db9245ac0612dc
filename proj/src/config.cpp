#include "dsf/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace dsf {

std::vector<int> RunConfig::active_filter_sizes() const {
  if (scales < 1 || static_cast<std::size_t>(scales) > filter_sizes.size())
    throw std::invalid_argument("config: scales must be in [1, len(filter_sizes)]");
  return {filter_sizes.begin(), filter_sizes.begin() + scales};
}

void validate(const RunConfig& cfg) {
  auto bad = [](const std::string& what) {
    throw std::invalid_argument("config: " + what);
  };
  if (cfg.scales < 1) bad("scales must be >= 1");
  if (cfg.filter_sizes.empty()) bad("filter_sizes must not be empty");
  if (static_cast<std::size_t>(cfg.scales) > cfg.filter_sizes.size())
    bad("scales exceeds filter_sizes length");
  for (int L : cfg.filter_sizes)
    if (L < 9 || L % 2 == 0 || L % 3 != 0) bad("filter sizes must be odd multiples of 3, >= 9");
  if (!(cfg.detection_threshold > 0)) bad("detection_threshold must be positive");
  if (!(cfg.ratio_threshold > 0)) bad("ratio_threshold must be positive");
  if (!(cfg.ransac_threshold_px > 0)) bad("ransac_threshold_px must be positive");
  if (!(cfg.ransac_confidence > 0 && cfg.ransac_confidence < 1))
    bad("ransac_confidence must be in (0,1)");
  if (cfg.ransac_max_iters < 1) bad("ransac_max_iters must be >= 1");
  if (cfg.lambda_rec < 0 || cfg.lambda_det < 0 || cfg.lambda_desc < 0 || cfg.lambda_adv < 0)
    bad("loss weights must be non-negative");
  if (cfg.min_inliers < 1) bad("min_inliers must be >= 1");
}

RunConfig parse_config(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("config: malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("config: top level must be an object");

  static const std::set<std::string> known = {
      "scales",          "filter_sizes",      "detection_threshold", "ratio_threshold",
      "ransac_threshold_px", "ransac_confidence", "ransac_max_iters",    "rng_seed",
      "lambda_rec",      "lambda_det",        "lambda_desc",         "lambda_adv",
      "min_inliers"};
  for (const auto& [key, _] : j.items())
    if (!known.contains(key)) throw std::invalid_argument("config: unknown key '" + key + "'");

  RunConfig cfg;
  try {
    if (j.contains("scales")) cfg.scales = j["scales"].get<int>();
    if (j.contains("filter_sizes")) cfg.filter_sizes = j["filter_sizes"].get<std::vector<int>>();
    if (j.contains("detection_threshold"))
      cfg.detection_threshold = j["detection_threshold"].get<double>();
    if (j.contains("ratio_threshold")) cfg.ratio_threshold = j["ratio_threshold"].get<double>();
    if (j.contains("ransac_threshold_px"))
      cfg.ransac_threshold_px = j["ransac_threshold_px"].get<double>();
    if (j.contains("ransac_confidence"))
      cfg.ransac_confidence = j["ransac_confidence"].get<double>();
    if (j.contains("ransac_max_iters")) cfg.ransac_max_iters = j["ransac_max_iters"].get<int>();
    if (j.contains("rng_seed")) cfg.rng_seed = j["rng_seed"].get<std::uint64_t>();
    if (j.contains("lambda_rec")) cfg.lambda_rec = j["lambda_rec"].get<double>();
    if (j.contains("lambda_det")) cfg.lambda_det = j["lambda_det"].get<double>();
    if (j.contains("lambda_desc")) cfg.lambda_desc = j["lambda_desc"].get<double>();
    if (j.contains("lambda_adv")) cfg.lambda_adv = j["lambda_adv"].get<double>();
    if (j.contains("min_inliers")) cfg.min_inliers = j["min_inliers"].get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("config: bad value type: ") + e.what());
  }
  validate(cfg);
  return cfg;
}

RunConfig read_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_to_json(const RunConfig& cfg) {
  nlohmann::ordered_json j;
  j["scales"] = cfg.scales;
  j["filter_sizes"] = cfg.filter_sizes;
  j["detection_threshold"] = cfg.detection_threshold;
  j["ratio_threshold"] = cfg.ratio_threshold;
  j["ransac_threshold_px"] = cfg.ransac_threshold_px;
  j["ransac_confidence"] = cfg.ransac_confidence;
  j["ransac_max_iters"] = cfg.ransac_max_iters;
  j["rng_seed"] = cfg.rng_seed;
  j["lambda_rec"] = cfg.lambda_rec;
  j["lambda_det"] = cfg.lambda_det;
  j["lambda_desc"] = cfg.lambda_desc;
  j["lambda_adv"] = cfg.lambda_adv;
  j["min_inliers"] = cfg.min_inliers;
  return j.dump(2);
}

}  // namespace dsf
