#include "dsf/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace dsf {

namespace {

inline double sgn(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

void require_same_shape(const auto& a, const auto& b, const char* who) {
  if (!same_shape(a, b)) throw std::invalid_argument(std::string(who) + ": shape mismatch");
}

/// Fixed row-major double reduction, independent of any threading upstream.
template <typename P>
double mean_abs_diff(const P& a, const P& b) {
  double acc = 0.0;
  for (Eigen::Index y = 0; y < a.rows(); ++y)
    for (Eigen::Index x = 0; x < a.cols(); ++x)
      acc += std::abs(static_cast<double>(a(y, x)) - static_cast<double>(b(y, x)));
  return acc / (static_cast<double>(a.rows()) * static_cast<double>(a.cols()));
}

}  // namespace

double adv_loss(const ScoreMap& score) {
  if (score.size() == 0) throw std::invalid_argument("adv_loss: empty score map");
  double acc = 0.0;
  for (Eigen::Index y = 0; y < score.rows(); ++y)
    for (Eigen::Index x = 0; x < score.cols(); ++x) {
      const double d = static_cast<double>(score(y, x)) - 1.0;
      acc += d * d;
    }
  return acc / static_cast<double>(score.size());
}

double disc_loss(const ScoreMap& real_score, const ScoreMap& fake_score) {
  require_same_shape(real_score, fake_score, "disc_loss");
  double real_term = adv_loss(real_score);
  double fake_term = 0.0;
  for (Eigen::Index y = 0; y < fake_score.rows(); ++y)
    for (Eigen::Index x = 0; x < fake_score.cols(); ++x) {
      const double d = static_cast<double>(fake_score(y, x));
      fake_term += d * d;
    }
  return real_term + fake_term / static_cast<double>(fake_score.size());
}

double rec_loss(const GrayImage& input, const GrayImage& reconstructed) {
  require_same_shape(input, reconstructed, "rec_loss");
  return mean_abs_diff(input, reconstructed);
}

double det_loss(const GrayImage& img_a, const GrayImage& img_b,
                const std::vector<ScaleSpec>& scales, int threads) {
  require_same_shape(img_a, img_b, "det_loss");
  const ResponsePyramid pa = detector_response(img_a, scales, threads);
  const ResponsePyramid pb = detector_response(img_b, scales, threads);
  double acc = 0.0;
  for (std::size_t i = 0; i < scales.size(); ++i) acc += mean_abs_diff(pa.det[i], pb.det[i]);
  return acc / static_cast<double>(scales.size());
}

double desc_loss(const GrayImage& img_a, const GrayImage& img_b,
                 const std::vector<ScaleSpec>& scales, const std::vector<DescriptorLUT>& luts,
                 int threads) {
  require_same_shape(img_a, img_b, "desc_loss");
  if (scales.size() != luts.size()) throw std::invalid_argument("desc_loss: scales/luts mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < scales.size(); ++i) {
    const DenseDescriptorMap da = dense_descriptors_fast(img_a, scales[i], luts[i], threads);
    const DenseDescriptorMap db = dense_descriptors_fast(img_b, scales[i], luts[i], threads);
    double ch_acc = 0.0;
    for (int c = 0; c < 64; ++c)
      ch_acc += mean_abs_diff(da.channels[static_cast<std::size_t>(c)],
                              db.channels[static_cast<std::size_t>(c)]);
    acc += ch_acc / 64.0;
  }
  return acc / static_cast<double>(scales.size());
}

double weighted_total(const LossWeights& weights, double rec, double det, double desc,
                      double adv) {
  return weights.lambda_rec * rec + weights.lambda_det * det + weights.lambda_desc * desc +
         weights.lambda_adv * adv;
}

LossReport generator_objective(const GrayImage& input, const GrayImage& reconstructed,
                               const ScoreMap& fake_score, const LossWeights& weights,
                               const std::vector<ScaleSpec>& scales,
                               const std::vector<DescriptorLUT>& luts, int threads) {
  require_same_shape(input, reconstructed, "generator_objective");
  const Eigen::Index want_h = (input.rows() + 7) / 8, want_w = (input.cols() + 7) / 8;
  if (fake_score.rows() != want_h || fake_score.cols() != want_w)
    throw std::invalid_argument("generator_objective: score map must be ceil(H/8) x ceil(W/8)");
  LossReport r;
  r.rec = rec_loss(input, reconstructed);
  r.det = det_loss(input, reconstructed, scales, threads);
  r.desc = desc_loss(input, reconstructed, scales, luts, threads);
  r.adv = adv_loss(fake_score);
  r.total = weighted_total(weights, r.rec, r.det, r.desc, r.adv);
  return r;
}

LossReport finetune_objective(const GrayImage& target, const GrayImage& synthetic,
                              const LossWeights& weights, const std::vector<ScaleSpec>& scales,
                              const std::vector<DescriptorLUT>& luts, int threads) {
  require_same_shape(target, synthetic, "finetune_objective");
  LossReport r;
  r.finetune_det = det_loss(target, synthetic, scales, threads);
  r.finetune_desc = desc_loss(target, synthetic, scales, luts, threads);
  r.total = weights.lambda_det * r.finetune_det + weights.lambda_desc * r.finetune_desc;
  return r;
}

LossId parse_loss_id(const std::string& name) {
  if (name == "rec") return LossId::rec;
  if (name == "det") return LossId::det;
  if (name == "desc") return LossId::desc;
  if (name == "gen") return LossId::gen;
  if (name == "finetune") return LossId::finetune;
  throw std::invalid_argument("unknown loss id '" + name + "'");
}

namespace detail {

double rec_loss_d(const Plane<double>& a, const Plane<double>& b) { return mean_abs_diff(a, b); }

double det_loss_d(const Plane<double>& a, const Plane<double>& b,
                  const std::vector<ScaleSpec>& scales) {
  const IntegralImage ia = integral(a), ib = integral(b);
  double acc = 0.0;
  for (const ScaleSpec& s : scales)
    acc += mean_abs_diff(detector_maps<double>(ia, s).det, detector_maps<double>(ib, s).det);
  return acc / static_cast<double>(scales.size());
}

double desc_loss_d(const Plane<double>& a, const Plane<double>& b,
                   const std::vector<ScaleSpec>& scales, const std::vector<DescriptorLUT>& luts) {
  double acc = 0.0;
  for (std::size_t i = 0; i < scales.size(); ++i) {
    const DenseForwardD fa = detail::dense_forward_d(a, scales[i], luts[i]);
    const DenseForwardD fb = detail::dense_forward_d(b, scales[i], luts[i]);
    double ch_acc = 0.0;
    for (int c = 0; c < 64; ++c)
      ch_acc += mean_abs_diff(fa.channels[static_cast<std::size_t>(c)],
                              fb.channels[static_cast<std::size_t>(c)]);
    acc += ch_acc / 64.0;
  }
  return acc / static_cast<double>(scales.size());
}

}  // namespace detail

namespace {

ImageGradient rec_grad(const GrayImage& a, const GrayImage& b, Wrt wrt) {
  const double inv_n = 1.0 / static_cast<double>(a.size());
  ImageGradient g(a.rows(), a.cols());
  for (Eigen::Index y = 0; y < a.rows(); ++y)
    for (Eigen::Index x = 0; x < a.cols(); ++x) {
      const double s = sgn(static_cast<double>(a(y, x)) - static_cast<double>(b(y, x)));
      g(y, x) = (wrt == Wrt::first ? s : -s) * inv_n;
    }
  return g;
}

ImageGradient det_grad(const GrayImage& a, const GrayImage& b, Wrt wrt,
                       const std::vector<ScaleSpec>& scales) {
  const IntegralImage ia = integral(a), ib = integral(b);
  const double inv = 1.0 / (static_cast<double>(scales.size()) * static_cast<double>(a.size()));
  ImageGradient g = ImageGradient::Zero(a.rows(), a.cols());
  for (const ScaleSpec& s : scales) {
    const Plane<double> da = detail::detector_maps<double>(ia, s).det;
    const Plane<double> db = detail::detector_maps<double>(ib, s).det;
    Plane<double> seed(a.rows(), a.cols());
    for (Eigen::Index y = 0; y < a.rows(); ++y)
      for (Eigen::Index x = 0; x < a.cols(); ++x)
        seed(y, x) = sgn(da(y, x) - db(y, x)) * inv;
    if (wrt == Wrt::first)
      g += detector_vjp(a, s, seed);
    else
      g -= detector_vjp(b, s, seed);
  }
  return g;
}

ImageGradient desc_grad(const GrayImage& a, const GrayImage& b, Wrt wrt,
                        const std::vector<ScaleSpec>& scales,
                        const std::vector<DescriptorLUT>& luts) {
  const double inv =
      1.0 / (static_cast<double>(scales.size()) * 64.0 * static_cast<double>(a.size()));
  ImageGradient g = ImageGradient::Zero(a.rows(), a.cols());
  for (std::size_t i = 0; i < scales.size(); ++i) {
    const detail::DenseForwardD fa = detail::dense_forward_d(a, scales[i], luts[i]);
    const detail::DenseForwardD fb = detail::dense_forward_d(b, scales[i], luts[i]);
    DescriptorSeed seed(64);
    for (int c = 0; c < 64; ++c) {
      const auto& ca = fa.channels[static_cast<std::size_t>(c)];
      const auto& cb = fb.channels[static_cast<std::size_t>(c)];
      Plane<double> s(a.rows(), a.cols());
      for (Eigen::Index y = 0; y < a.rows(); ++y)
        for (Eigen::Index x = 0; x < a.cols(); ++x) s(y, x) = sgn(ca(y, x) - cb(y, x)) * inv;
      seed[static_cast<std::size_t>(c)] = std::move(s);
    }
    if (wrt == Wrt::first)
      g += descriptor_vjp(a, scales[i], luts[i], seed);
    else
      g -= descriptor_vjp(b, scales[i], luts[i], seed);
  }
  return g;
}

}  // namespace

ImageGradient loss_grad(LossId id, const GrayImage& img_a, const GrayImage& img_b, Wrt wrt,
                        const LossWeights& weights, const std::vector<ScaleSpec>& scales,
                        const std::vector<DescriptorLUT>& luts) {
  require_same_shape(img_a, img_b, "loss_grad");
  switch (id) {
    case LossId::rec:
      return rec_grad(img_a, img_b, wrt);
    case LossId::det:
      return det_grad(img_a, img_b, wrt, scales);
    case LossId::desc:
      return desc_grad(img_a, img_b, wrt, scales, luts);
    case LossId::gen: {
      ImageGradient g = weights.lambda_rec * rec_grad(img_a, img_b, wrt);
      g += weights.lambda_det * det_grad(img_a, img_b, wrt, scales);
      g += weights.lambda_desc * desc_grad(img_a, img_b, wrt, scales, luts);
      return g;  // adversarial term is constant in the images
    }
    case LossId::finetune: {
      ImageGradient g = weights.lambda_det * det_grad(img_a, img_b, wrt, scales);
      g += weights.lambda_desc * desc_grad(img_a, img_b, wrt, scales, luts);
      return g;
    }
  }
  throw std::invalid_argument("loss_grad: invalid loss id");
}

}  // namespace dsf
