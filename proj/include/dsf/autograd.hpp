#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dsf/core/plane.hpp"
#include "dsf/descriptor.hpp"
#include "dsf/detector.hpp"

namespace dsf {

/// d(scalar objective)/d(pixel), same shape as the source image.
using ImageGradient = Plane<double>;

/// Adjoint seed for one scale's det-of-Hessian map.
using DetectorSeed = Plane<double>;

/// Adjoint seed for a dense descriptor map: 64 planes of H x W.
using DescriptorSeed = std::vector<Plane<double>>;

/// J^T * seed for the det map of one scale as a function of the image:
/// the Hadamard-product adjoints routed through the clamp-aware box-filter
/// adjoints. Exact up to floating point.
ImageGradient detector_vjp(const GrayImage& img, const ScaleSpec& spec, const DetectorSeed& seed);

/// Reverse mode through L2 normalisation (zero-norm pixels propagate zero),
/// neighbourhood and sample weights, the signed/absolute accumulations
/// (d|x|/dx = sign(x), sign(0) = 0), the clamped plane shifts, and the
/// replicate-border Haar filters.
ImageGradient descriptor_vjp(const GrayImage& img, const ScaleSpec& spec, const DescriptorLUT& lut,
                             const DescriptorSeed& seed);

struct GradcheckTrial {
  int trial = 0;
  double max_rel_err = 0.0;
  std::string status;  // pass | fail | skipped_degenerate | subgradient_ambiguous
  long excluded_coords = 0;
};

struct GradcheckOpReport {
  std::string op;
  double fd_step = 1e-3;
  double fd_threshold = 1e-3;
  std::vector<GradcheckTrial> trials;
  // Dot-product adjoint consistency <Jv, s> vs <v, J^T s>; detector and
  // descriptor only.
  bool dot_test_run = false;
  double dot_step = 1e-4;
  double dot_threshold = 1e-6;
  double dot_max_rel_err = 0.0;
  bool pass = true;
};

struct GradcheckReport {
  std::uint64_t rng_seed = 0;
  int trials_requested = 0;
  std::vector<GradcheckOpReport> ops;
  bool pass = true;
};

/// Randomised central finite-difference validation of the analytic
/// gradients. op_id is one of detector | descriptor | losses | all.
/// Deterministic for a given rng seed.
GradcheckReport gradcheck(const std::string& op_id, int trials, std::uint64_t rng_seed);

class Rng;

namespace detail {

/// 1/0 mask of descriptor pixels safe for finite differencing: excludes
/// pixels whose footprint touches a near-kink Haar response or whose
/// pre-normalisation norm is tiny. `excluded` receives the excluded count.
Plane<double> descriptor_fd_mask(const DenseForwardD& fwd, const DescriptorLUT& lut,
                                 long& excluded);

/// One seeded FD-vs-VJP trial for the dense descriptor at one image.
/// Degenerate images (everything masked) report skipped_degenerate.
GradcheckTrial descriptor_fd_trial(const GrayImage& img, const ScaleSpec& spec,
                                   const DescriptorLUT& lut, Rng& rng, double h, double threshold,
                                   int directions);

}  // namespace detail

}  // namespace dsf
