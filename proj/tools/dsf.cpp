#include <chrono>
#include <limits>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dsf/autograd.hpp"
#include "dsf/config.hpp"
#include "dsf/core/image_io.hpp"
#include "dsf/core/rng.hpp"
#include "dsf/core/threading.hpp"
#include "dsf/descriptor.hpp"
#include "dsf/detector.hpp"
#include "dsf/io/tensor.hpp"
#include "dsf/losses.hpp"
#include "dsf/matchloc.hpp"

namespace {

using dsf::RunConfig;

struct ConfigFlags {
  std::string config_path;
  RunConfig values;
  // Option pointers so file values only get overridden by flags actually given.
  CLI::Option *scales = nullptr, *filter_sizes = nullptr, *det_thresh = nullptr,
              *ratio = nullptr, *ransac_thresh = nullptr, *ransac_conf = nullptr,
              *ransac_iters = nullptr, *seed = nullptr, *l_rec = nullptr, *l_det = nullptr,
              *l_desc = nullptr, *l_adv = nullptr, *min_inliers = nullptr;
};

void add_config_flags(CLI::App* app, ConfigFlags& f) {
  app->add_option("--config", f.config_path, "JSON config file");
  f.scales = app->add_option("--scales", f.values.scales, "Number of scales");
  f.filter_sizes = app->add_option("--filter-sizes", f.values.filter_sizes,
                                   "Comma-separated filter sizes")
                       ->delimiter(',');
  f.det_thresh =
      app->add_option("--detection-threshold", f.values.detection_threshold, "Keypoint threshold");
  f.ratio = app->add_option("--ratio-threshold", f.values.ratio_threshold, "NN ratio threshold");
  f.ransac_thresh =
      app->add_option("--ransac-threshold", f.values.ransac_threshold_px, "Inlier threshold (px)");
  f.ransac_conf =
      app->add_option("--ransac-confidence", f.values.ransac_confidence, "RANSAC confidence");
  f.ransac_iters =
      app->add_option("--ransac-max-iters", f.values.ransac_max_iters, "RANSAC iteration cap");
  f.seed = app->add_option("--seed", f.values.rng_seed, "RNG seed");
  f.l_rec = app->add_option("--lambda-rec", f.values.lambda_rec, "Reconstruction loss weight");
  f.l_det = app->add_option("--lambda-det", f.values.lambda_det, "Detector loss weight");
  f.l_desc = app->add_option("--lambda-desc", f.values.lambda_desc, "Descriptor loss weight");
  f.l_adv = app->add_option("--lambda-adv", f.values.lambda_adv, "Adversarial loss weight");
  f.min_inliers = app->add_option("--min-inliers", f.values.min_inliers, "Verification floor");
}

RunConfig resolve_config(const ConfigFlags& f) {
  RunConfig cfg;
  if (!f.config_path.empty()) cfg = dsf::read_config(f.config_path);
  auto ov = [](CLI::Option* opt, auto& dst, const auto& src) {
    if (opt && opt->count() > 0) dst = src;
  };
  ov(f.scales, cfg.scales, f.values.scales);
  ov(f.filter_sizes, cfg.filter_sizes, f.values.filter_sizes);
  ov(f.det_thresh, cfg.detection_threshold, f.values.detection_threshold);
  ov(f.ratio, cfg.ratio_threshold, f.values.ratio_threshold);
  ov(f.ransac_thresh, cfg.ransac_threshold_px, f.values.ransac_threshold_px);
  ov(f.ransac_conf, cfg.ransac_confidence, f.values.ransac_confidence);
  ov(f.ransac_iters, cfg.ransac_max_iters, f.values.ransac_max_iters);
  ov(f.seed, cfg.rng_seed, f.values.rng_seed);
  ov(f.l_rec, cfg.lambda_rec, f.values.lambda_rec);
  ov(f.l_det, cfg.lambda_det, f.values.lambda_det);
  ov(f.l_desc, cfg.lambda_desc, f.values.lambda_desc);
  ov(f.l_adv, cfg.lambda_adv, f.values.lambda_adv);
  ov(f.min_inliers, cfg.min_inliers, f.values.min_inliers);
  dsf::validate(cfg);
  return cfg;
}

void write_text(const std::string& text, const std::string& path) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << text;
}

dsf::ScoreMap score_from_tensor(const std::string& path) {
  const dsf::Tensor t = dsf::read_tensor(path);
  if (t.dims.size() != 2) throw std::runtime_error(path + ": score map tensor must be 2-D");
  dsf::ScoreMap s(static_cast<Eigen::Index>(t.dims[0]), static_cast<Eigen::Index>(t.dims[1]));
  for (Eigen::Index y = 0; y < s.rows(); ++y)
    for (Eigen::Index x = 0; x < s.cols(); ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * t.dims[1] + static_cast<std::size_t>(x);
      s(y, x) = t.dtype == 1 ? t.f32[i] : static_cast<float>(t.f64[i]);
    }
  return s;
}

nlohmann::ordered_json loss_report_json(const std::string& kind, const dsf::LossReport& r,
                                        const dsf::LossWeights& w) {
  nlohmann::ordered_json j;
  j["kind"] = kind;
  j["components"] = {{"rec", r.rec},
                     {"det", r.det},
                     {"desc", r.desc},
                     {"adv", r.adv},
                     {"disc", r.disc},
                     {"finetune_det", r.finetune_det},
                     {"finetune_desc", r.finetune_desc}};
  j["weights"] = {{"lambda_rec", w.lambda_rec},
                  {"lambda_det", w.lambda_det},
                  {"lambda_desc", w.lambda_desc},
                  {"lambda_adv", w.lambda_adv}};
  j["total"] = r.total;
  return j;
}

nlohmann::ordered_json gradcheck_json(const dsf::GradcheckReport& rep) {
  nlohmann::ordered_json j;
  j["rng_seed"] = rep.rng_seed;
  j["trials_requested"] = rep.trials_requested;
  j["pass"] = rep.pass;
  nlohmann::ordered_json ops = nlohmann::ordered_json::array();
  for (const auto& op : rep.ops) {
    nlohmann::ordered_json o;
    o["op"] = op.op;
    o["fd_step"] = op.fd_step;
    o["fd_threshold"] = op.fd_threshold;
    nlohmann::ordered_json trials = nlohmann::ordered_json::array();
    for (const auto& t : op.trials)
      trials.push_back({{"trial", t.trial},
                        {"max_rel_err", t.max_rel_err},
                        {"status", t.status},
                        {"excluded_coords", t.excluded_coords}});
    o["trials"] = trials;
    if (op.dot_test_run) {
      o["dot_step"] = op.dot_step;
      o["dot_threshold"] = op.dot_threshold;
      o["dot_max_rel_err"] = op.dot_max_rel_err;
    }
    o["pass"] = op.pass;
    ops.push_back(o);
  }
  j["ops"] = ops;
  return j;
}

int run(int argc, char** argv) {
  CLI::App app{"Dense SURF feature pipeline: detector response maps, dense descriptors, "
               "image-space gradients, losses, and matching"};
  app.require_subcommand(1);
  app.fallthrough();  // lets --threads follow a subcommand
  int threads_flag = 0;
  app.add_option("--threads", threads_flag, "Worker thread cap (default: DSF_THREADS or 1)");

  // ---- detect ----
  auto* sc_detect = app.add_subcommand("detect", "Detect keypoints, emit CSV");
  std::string detect_img, detect_csv, detect_dump;
  ConfigFlags detect_cfg;
  sc_detect->add_option("image", detect_img, "Input image (PNG/PGM)")->required();
  sc_detect->add_option("--out-csv", detect_csv, "CSV output path (default stdout)");
  sc_detect->add_option("--dump-det", detect_dump, "Write det maps as a (S,H,W) tensor");
  add_config_flags(sc_detect, detect_cfg);

  // ---- describe ----
  auto* sc_describe = app.add_subcommand("describe", "Dense descriptor maps per scale");
  std::string describe_img, describe_prefix = "dense";
  ConfigFlags describe_cfg;
  sc_describe->add_option("image", describe_img, "Input image")->required();
  sc_describe->add_option("--out-prefix", describe_prefix, "Output path prefix");
  add_config_flags(sc_describe, describe_cfg);

  // ---- match ----
  auto* sc_match = app.add_subcommand("match", "Match two images and verify with RANSAC");
  std::string match_a, match_b, match_json, match_vis;
  bool match_no_timings = false;
  ConfigFlags match_cfg;
  sc_match->add_option("image_a", match_a, "First image")->required();
  sc_match->add_option("image_b", match_b, "Second image")->required();
  sc_match->add_option("--json", match_json, "JSON report path (default stdout)");
  sc_match->add_option("--vis", match_vis, "Side-by-side PNG with inlier matches");
  sc_match->add_flag("--no-timings", match_no_timings, "Omit the timings object");
  add_config_flags(sc_match, match_cfg);

  // ---- loss ----
  auto* sc_loss = app.add_subcommand(
      "loss", "Evaluate a loss: rec|det|desc|adv|disc|gen|finetune over images / score tensors");
  std::string loss_kind, loss_json;
  std::vector<std::string> loss_args;
  ConfigFlags loss_cfg;
  sc_loss->add_option("kind", loss_kind, "rec|det|desc|adv|disc|gen|finetune")->required();
  sc_loss->add_option("inputs", loss_args, "Input paths (images, or DSF tensors for score maps)");
  sc_loss->add_option("--json", loss_json, "JSON output path (default stdout)");
  add_config_flags(sc_loss, loss_cfg);

  // ---- gradcheck ----
  auto* sc_grad = app.add_subcommand("gradcheck", "Finite-difference gradient validation");
  std::string grad_op = "all", grad_json;
  int grad_trials = 10;
  ConfigFlags grad_cfg;
  sc_grad->add_option("--op", grad_op, "detector|descriptor|losses|all");
  sc_grad->add_option("--trials", grad_trials, "Trials per op");
  sc_grad->add_option("--json", grad_json, "JSON output path (default stdout)");
  add_config_flags(sc_grad, grad_cfg);

  // ---- bench ----
  auto* sc_bench = app.add_subcommand("bench", "Fast vs naive dense-descriptor timings (CSV)");
  int bench_size = 256;
  std::string bench_out;
  ConfigFlags bench_cfg;
  sc_bench->add_option("--size", bench_size, "Square test image side");
  sc_bench->add_option("--out", bench_out, "CSV output path (default stdout)");
  add_config_flags(sc_bench, bench_cfg);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;  // usage errors -> 1, --help -> 0
  }

  const int threads = dsf::resolve_threads(threads_flag);

  try {
    if (*sc_detect) {
      const RunConfig cfg = resolve_config(detect_cfg);
      const dsf::GrayImage img = dsf::load_image(detect_img);
      const auto scales = dsf::scales_from_sizes(cfg.active_filter_sizes());
      const dsf::ResponsePyramid pyr = dsf::detector_response(img, scales, threads);
      const auto kps = dsf::extract_keypoints(pyr, static_cast<float>(cfg.detection_threshold));
      write_text(dsf::keypoints_to_csv(kps), detect_csv);
      if (!detect_dump.empty()) dsf::write_tensor(dsf::tensor_from_planes(pyr.det), detect_dump);
      return 0;
    }

    if (*sc_describe) {
      const RunConfig cfg = resolve_config(describe_cfg);
      const dsf::GrayImage img = dsf::load_image(describe_img);
      const auto scales = dsf::scales_from_sizes(cfg.active_filter_sizes());
      const auto luts = dsf::build_luts(scales);
      for (std::size_t i = 0; i < scales.size(); ++i) {
        const dsf::DenseDescriptorMap map =
            dsf::dense_descriptors_fast(img, scales[i], luts[i], threads);
        const std::string path = describe_prefix + "_scale" + std::to_string(i) + ".dsf";
        dsf::write_tensor(dsf::tensor_from_planes(map.channels), path);
        std::cout << path << "\n";
      }
      return 0;
    }

    if (*sc_match) {
      const RunConfig cfg = resolve_config(match_cfg);
      const dsf::GrayImage a = dsf::load_image(match_a);
      const dsf::GrayImage b = dsf::load_image(match_b);
      const dsf::PairReport rep = dsf::evaluate_pair(a, b, cfg, threads);
      write_text(rep.to_json(!match_no_timings) + "\n", match_json);
      if (!match_vis.empty())
        dsf::save_match_visualisation(a, b, rep.kps_a, rep.kps_b, rep.matches, rep.inliers,
                                      match_vis);
      return 0;
    }

    if (*sc_loss) {
      const RunConfig cfg = resolve_config(loss_cfg);
      const dsf::LossWeights w{cfg.lambda_rec, cfg.lambda_det, cfg.lambda_desc, cfg.lambda_adv};
      const auto scales = dsf::scales_from_sizes(cfg.active_filter_sizes());
      const auto luts = dsf::build_luts(scales);
      auto need = [&](std::size_t n) {
        if (loss_args.size() != n)
          throw std::invalid_argument("loss " + loss_kind + ": expected " + std::to_string(n) +
                                      " input path(s)");
      };
      dsf::LossReport r;
      if (loss_kind == "rec") {
        need(2);
        r.rec = dsf::rec_loss(dsf::load_image(loss_args[0]), dsf::load_image(loss_args[1]));
        r.total = r.rec;
      } else if (loss_kind == "det") {
        need(2);
        r.det = dsf::det_loss(dsf::load_image(loss_args[0]), dsf::load_image(loss_args[1]), scales,
                              threads);
        r.total = r.det;
      } else if (loss_kind == "desc") {
        need(2);
        r.desc = dsf::desc_loss(dsf::load_image(loss_args[0]), dsf::load_image(loss_args[1]),
                                scales, luts, threads);
        r.total = r.desc;
      } else if (loss_kind == "adv") {
        need(1);
        r.adv = dsf::adv_loss(score_from_tensor(loss_args[0]));
        r.total = r.adv;
      } else if (loss_kind == "disc") {
        need(2);
        r.disc = dsf::disc_loss(score_from_tensor(loss_args[0]), score_from_tensor(loss_args[1]));
        r.total = r.disc;
      } else if (loss_kind == "gen") {
        need(3);
        r = dsf::generator_objective(dsf::load_image(loss_args[0]), dsf::load_image(loss_args[1]),
                                     score_from_tensor(loss_args[2]), w, scales, luts, threads);
      } else if (loss_kind == "finetune") {
        need(2);
        r = dsf::finetune_objective(dsf::load_image(loss_args[0]), dsf::load_image(loss_args[1]),
                                    w, scales, luts, threads);
      } else {
        throw std::invalid_argument("unknown loss kind '" + loss_kind + "'");
      }
      write_text(loss_report_json(loss_kind, r, w).dump(2) + "\n", loss_json);
      return 0;
    }

    if (*sc_grad) {
      const RunConfig cfg = resolve_config(grad_cfg);
      const dsf::GradcheckReport rep = dsf::gradcheck(grad_op, grad_trials, cfg.rng_seed);
      write_text(gradcheck_json(rep).dump(2) + "\n", grad_json);
      return rep.pass ? 0 : 2;
    }

    if (*sc_bench) {
      const RunConfig cfg = resolve_config(bench_cfg);
      if (bench_size < 64) throw std::invalid_argument("bench: --size must be >= 64");
      dsf::Rng rng(cfg.rng_seed);
      const dsf::GrayImage img = dsf::random_plane<float>(bench_size, bench_size, rng);
      const auto scales = dsf::scales_from_sizes(cfg.active_filter_sizes());
      const auto luts = dsf::build_luts(scales);
      std::string csv = "scale_index,filter_size,step,fast_ms,naive_ms,speedup\n";
      char line[160];
      for (std::size_t i = 0; i < scales.size(); ++i) {
        using clock = std::chrono::steady_clock;
        // Best-of-N wall times; min is the robust estimator on a noisy box.
        double fast_ms = std::numeric_limits<double>::infinity();
        for (int rep = 0; rep < 5; ++rep) {
          const auto t0 = clock::now();
          const auto fast = dsf::dense_descriptors_fast(img, scales[i], luts[i], 1);
          fast_ms = std::min(fast_ms,
                             std::chrono::duration<double, std::milli>(clock::now() - t0).count());
        }
        double naive_ms = std::numeric_limits<double>::infinity();
        for (int rep = 0; rep < 2; ++rep) {
          const auto t0 = clock::now();
          const auto naive = dsf::dense_descriptors_naive(img, scales[i], luts[i]);
          naive_ms = std::min(
              naive_ms, std::chrono::duration<double, std::milli>(clock::now() - t0).count());
        }
        std::snprintf(line, sizeof(line), "%zu,%d,%d,%.3f,%.3f,%.2f\n", i,
                      scales[i].filter_size, scales[i].step, fast_ms, naive_ms,
                      naive_ms / fast_ms);
        csv += line;
      }
      write_text(csv, bench_out);
      return 0;
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (...) {
    std::cerr << "error: unknown failure\n";
    return 2;
  }
}
