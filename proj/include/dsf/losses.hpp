#pragma once

#include <string>
#include <vector>

#include "dsf/autograd.hpp"
#include "dsf/core/plane.hpp"
#include "dsf/descriptor.hpp"
#include "dsf/detector.hpp"

namespace dsf {

/// Patch-discriminator output map, H/8 x W/8 for an H x W image.
using ScoreMap = Plane<float>;

struct LossWeights {
  double lambda_rec = 8.0;
  double lambda_det = 2.0;
  double lambda_desc = 2.0;
  double lambda_adv = 1.0;
};

struct LossReport {
  double rec = 0.0;
  double det = 0.0;
  double desc = 0.0;
  double adv = 0.0;
  double disc = 0.0;
  double finetune_det = 0.0;
  double finetune_desc = 0.0;
  double total = 0.0;
};

/// Least-squares fool term: mean over the map of (score - 1)^2. One
/// generator direction per call; callers sum two calls for the full
/// adversarial objective.
double adv_loss(const ScoreMap& score);

/// mean[(real - 1)^2] + mean[fake^2].
double disc_loss(const ScoreMap& real_score, const ScoreMap& fake_score);

/// Mean absolute pixel difference (L1 realised as a mean so weights stay
/// resolution-independent).
double rec_loss(const GrayImage& input, const GrayImage& reconstructed);

/// Mean absolute difference between the two images' det-of-Hessian maps,
/// averaged over pixels and scales.
double det_loss(const GrayImage& img_a, const GrayImage& img_b,
                const std::vector<ScaleSpec>& scales, int threads = 1);

/// Mean absolute difference between dense descriptor maps, averaged over
/// channels, pixels and scales.
double desc_loss(const GrayImage& img_a, const GrayImage& img_b,
                 const std::vector<ScaleSpec>& scales, const std::vector<DescriptorLUT>& luts,
                 int threads = 1);

/// lambda_rec * rec + lambda_det * det + lambda_desc * desc + lambda_adv * adv.
double weighted_total(const LossWeights& weights, double rec, double det, double desc,
                      double adv);

/// Weighted generator objective over one direction. fake_score must be
/// ceil(H/8) x ceil(W/8) for the H x W inputs.
LossReport generator_objective(const GrayImage& input, const GrayImage& reconstructed,
                               const ScoreMap& fake_score, const LossWeights& weights,
                               const std::vector<ScaleSpec>& scales,
                               const std::vector<DescriptorLUT>& luts, int threads = 1);

/// Fine-tuning objective over an aligned pair:
/// lambda_det * det + lambda_desc * desc.
LossReport finetune_objective(const GrayImage& target, const GrayImage& synthetic,
                              const LossWeights& weights, const std::vector<ScaleSpec>& scales,
                              const std::vector<DescriptorLUT>& luts, int threads = 1);

enum class LossId { rec, det, desc, gen, finetune };

LossId parse_loss_id(const std::string& name);  // throws on unknown names

/// Which image argument the gradient is taken with respect to.
enum class Wrt { first, second };

/// Gradient of the named loss w.r.t. one image input, assembled from the
/// detector/descriptor VJPs. Subgradient of |.| at 0 is 0.
ImageGradient loss_grad(LossId id, const GrayImage& img_a, const GrayImage& img_b, Wrt wrt,
                        const LossWeights& weights, const std::vector<ScaleSpec>& scales,
                        const std::vector<DescriptorLUT>& luts);

namespace detail {

/// Double-precision loss paths used by the gradient checks.
double rec_loss_d(const Plane<double>& a, const Plane<double>& b);
double det_loss_d(const Plane<double>& a, const Plane<double>& b,
                  const std::vector<ScaleSpec>& scales);
double desc_loss_d(const Plane<double>& a, const Plane<double>& b,
                   const std::vector<ScaleSpec>& scales, const std::vector<DescriptorLUT>& luts);

}  // namespace detail

}  // namespace dsf
