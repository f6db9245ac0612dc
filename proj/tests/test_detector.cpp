#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "dsf/core/rng.hpp"
#include "dsf/detector.hpp"
#include "fixtures.hpp"

using namespace dsf;

namespace {

/// Straightforward NMS over the full pyramid: strict maxima over the
/// clipped 3x3x3 neighbourhood with response > threshold.
std::vector<Keypoint> nms_oracle(const ResponsePyramid& pyr, float threshold) {
  const int ns = static_cast<int>(pyr.det.size());
  const Eigen::Index h = pyr.det[0].rows(), w = pyr.det[0].cols();
  std::vector<Keypoint> out;
  for (int si = 0; si < ns; ++si) {
    const Eigen::Index margin = pyr.scales[si].filter_size / 2 + 1;
    for (Eigen::Index y = margin; y < h - margin; ++y)
      for (Eigen::Index x = margin; x < w - margin; ++x) {
        const float v = pyr.det[si](y, x);
        if (!(v > threshold)) continue;
        bool ok = true;
        for (int sj = si - 1; sj <= si + 1; ++sj) {
          if (sj < 0 || sj >= ns) continue;
          for (Eigen::Index yy = y - 1; yy <= y + 1; ++yy) {
            if (yy < 0 || yy >= h) continue;
            for (Eigen::Index xx = x - 1; xx <= x + 1; ++xx) {
              if (xx < 0 || xx >= w) continue;
              if (sj == si && yy == y && xx == x) continue;
              if (!(v > pyr.det[sj](yy, xx))) ok = false;
            }
          }
        }
        if (!ok) continue;
        Keypoint kp;
        kp.x = static_cast<int>(x);
        kp.y = static_cast<int>(y);
        kp.scale_index = si;
        kp.response = v;
        kp.laplacian_sign = (pyr.lxx[si](y, x) + pyr.lyy[si](y, x)) < 0 ? -1 : 1;
        out.push_back(kp);
      }
  }
  return out;
}

/// Dense-stencil det map (independent of the integral-image machinery).
Plane<double> dense_det_oracle(const GrayImage& img, const ScaleSpec& spec) {
  const HessianFilters f = hessian_filters(spec);
  const Eigen::Index h = img.rows(), w = img.cols();
  auto conv = [&](const BoxFilterSpec& s) {
    Plane<double> out(h, w);
    for (Eigen::Index y = 0; y < h; ++y)
      for (Eigen::Index x = 0; x < w; ++x) {
        double acc = 0.0;
        for (const FilterBox& b : s.boxes)
          acc += b.weight * testing::brute_box_sum(img, y + b.row_offset, x + b.col_offset,
                                                   b.box_height, b.box_width);
        out(y, x) = acc;
      }
    return out;
  };
  const Plane<double> lxx = conv(f.dxx), lyy = conv(f.dyy), lxy = conv(f.dxy);
  return lxx * lyy - 0.81 * lxy * lxy;
}

}  // namespace

TEST_CASE("make_scale: sigma and step follow the ladder") {
  const ScaleSpec s9 = make_scale(9);
  CHECK(s9.sigma == doctest::Approx(1.2));
  CHECK(s9.step == 1);
  const ScaleSpec s27 = make_scale(27);
  CHECK(s27.sigma == doctest::Approx(3.6));
  CHECK(s27.step == 4);
  const ScaleSpec s33 = make_scale(33);
  CHECK(s33.step == 4);  // round(4.4)
  CHECK_THROWS(make_scale(8));
  CHECK_THROWS(make_scale(11));  // odd but not a multiple of 3
  CHECK_THROWS(make_scale(3));
}

TEST_CASE("hessian_filters: L=9 D_xx equals the canonical 9x9 stencil") {
  const HessianFilters f = hessian_filters(make_scale(9));
  double got[9][9] = {};
  for (const FilterBox& b : f.dxx.boxes)
    for (int dy = b.row_offset; dy < b.row_offset + b.box_height; ++dy)
      for (int dx = b.col_offset; dx < b.col_offset + b.box_width; ++dx)
        got[dy + 4][dx + 4] += b.weight * 81.0;  // undo 1/L^2 for integer comparison

  // Canonical layout: 5-row lobes, columns {0..2}=+1, {3..5}=-2, {6..8}=+1.
  for (int r = 0; r < 9; ++r)
    for (int c = 0; c < 9; ++c) {
      double want = 0.0;
      if (r >= 2 && r <= 6) want = (c < 3 || c > 5) ? 1.0 : -2.0;
      CHECK(got[r][c] == doctest::Approx(want));
    }
}

TEST_CASE("hessian_filters: D_yy is the transpose of D_xx, filters are zero-DC") {
  for (int L : {9, 15, 21, 27, 33}) {
    const HessianFilters f = hessian_filters(make_scale(L));
    REQUIRE(f.dxx.boxes.size() == f.dyy.boxes.size());
    for (std::size_t i = 0; i < f.dxx.boxes.size(); ++i) {
      CHECK(f.dxx.boxes[i].row_offset == f.dyy.boxes[i].col_offset);
      CHECK(f.dxx.boxes[i].col_offset == f.dyy.boxes[i].row_offset);
      CHECK(f.dxx.boxes[i].box_height == f.dyy.boxes[i].box_width);
      CHECK(f.dxx.boxes[i].box_width == f.dyy.boxes[i].box_height);
      CHECK(f.dxx.boxes[i].weight == f.dyy.boxes[i].weight);
    }
    for (const BoxFilterSpec* s : {&f.dxx, &f.dyy, &f.dxy}) {
      double dc = 0.0;
      for (const FilterBox& b : s->boxes) dc += b.weight * b.box_height * b.box_width;
      CHECK(dc == doctest::Approx(0.0));
    }
  }
}

TEST_CASE("detector_response: constant image gives zero det maps in the interior") {
  const GrayImage c = GrayImage::Constant(48, 48, 0.6f);
  const ResponsePyramid pyr = detector_response(c, default_scales());
  for (std::size_t i = 0; i < pyr.scales.size(); ++i) {
    const int border = pyr.scales[i].filter_size;
    for (Eigen::Index y = border; y < 48 - border; ++y)
      for (Eigen::Index x = border; x < 48 - border; ++x)
        CHECK(std::abs(pyr.det[i](y, x)) < 1e-7f);
  }
}

TEST_CASE("detector_response: cross-term weight is exactly 0.81") {
  Rng rng(100);
  const GrayImage img = random_plane<float>(32, 32, rng);
  const ResponsePyramid pyr = detector_response(img, {make_scale(9)});
  for (Eigen::Index y = 0; y < 32; ++y)
    for (Eigen::Index x = 0; x < 32; ++x) {
      const double want = static_cast<double>(pyr.lxx[0](y, x)) * pyr.lyy[0](y, x) -
                          0.81 * static_cast<double>(pyr.lxy[0](y, x)) * pyr.lxy[0](y, x);
      CHECK(pyr.det[0](y, x) == doctest::Approx(want).epsilon(1e-9).scale(1.0));
    }
}

TEST_CASE("detector_response: centred blob peaks at its centre, matching the dense oracle") {
  const GrayImage img = testing::gaussian_blob(32, 32, 16.0, 16.0, 2.0);
  const ResponsePyramid pyr = detector_response(img, {make_scale(9)});
  Eigen::Index by = 0, bx = 0;
  pyr.det[0].maxCoeff(&by, &bx);
  CHECK(std::abs(static_cast<double>(by) - 16.0) <= 1.0);
  CHECK(std::abs(static_cast<double>(bx) - 16.0) <= 1.0);

  const Plane<double> oracle = dense_det_oracle(img, make_scale(9));
  Eigen::Index oy = 0, ox = 0;
  oracle.maxCoeff(&oy, &ox);
  CHECK(oy == by);
  CHECK(ox == bx);
}

TEST_CASE("detector_response: image smaller than the largest filter is an error") {
  const GrayImage img = GrayImage::Constant(20, 20, 0.5f);
  CHECK_THROWS(detector_response(img, {make_scale(21)}));
}

TEST_CASE("extract_keypoints: zero pyramid yields nothing, planted impulse yields one") {
  ResponsePyramid pyr;
  pyr.scales = scales_from_sizes({9, 15, 21});
  for (int i = 0; i < 3; ++i) {
    pyr.det.push_back(GrayImage::Zero(32, 32));
    pyr.lxx.push_back(GrayImage::Zero(32, 32));
    pyr.lyy.push_back(GrayImage::Zero(32, 32));
    pyr.lxy.push_back(GrayImage::Zero(32, 32));
  }
  CHECK(extract_keypoints(pyr, 0.0f).empty());

  pyr.det[1](15, 17) = 0.5f;
  pyr.lxx[1](15, 17) = -1.0f;  // dark blob: negative laplacian
  const auto kps = extract_keypoints(pyr, 0.1f);
  REQUIRE(kps.size() == 1);
  CHECK(kps[0].x == 17);
  CHECK(kps[0].y == 15);
  CHECK(kps[0].scale_index == 1);
  CHECK(kps[0].response == doctest::Approx(0.5f));
  CHECK(kps[0].laplacian_sign == -1);
}

TEST_CASE("extract_keypoints: matches the exhaustive NMS oracle on random pyramids") {
  Rng rng(2024);
  for (int trial = 0; trial < 5; ++trial) {
    ResponsePyramid pyr;
    pyr.scales = scales_from_sizes({9, 15, 21});
    for (int i = 0; i < 3; ++i) {
      pyr.det.push_back(random_plane<float>(31, 29, rng, -1.0, 1.0));
      pyr.lxx.push_back(random_plane<float>(31, 29, rng, -1.0, 1.0));
      pyr.lyy.push_back(random_plane<float>(31, 29, rng, -1.0, 1.0));
      pyr.lxy.push_back(random_plane<float>(31, 29, rng, -1.0, 1.0));
    }
    const auto got = extract_keypoints(pyr, 0.2f);
    auto want = nms_oracle(pyr, 0.2f);
    std::sort(want.begin(), want.end(), [](const Keypoint& a, const Keypoint& b) {
      if (a.response != b.response) return a.response > b.response;
      if (a.y != b.y) return a.y < b.y;
      if (a.x != b.x) return a.x < b.x;
      return a.scale_index < b.scale_index;
    });
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i].x == want[i].x);
      CHECK(got[i].y == want[i].y);
      CHECK(got[i].scale_index == want[i].scale_index);
      CHECK(got[i].response == want[i].response);
      CHECK(got[i].laplacian_sign == want[i].laplacian_sign);
    }
  }
}

TEST_CASE("invariant: horizontal-flip equivariance of det maps") {
  const GrayImage img = testing::blob_image(40, 40, 7);
  const auto scales = scales_from_sizes({9, 15});
  const ResponsePyramid a = detector_response(img, scales);
  const ResponsePyramid b = detector_response(testing::flip_h(img), scales);
  for (std::size_t i = 0; i < scales.size(); ++i)
    CHECK(((testing::flip_h(a.det[i]) - b.det[i]).abs() < 1e-6f).all());
}

TEST_CASE("invariant: intensity scaling scales det maps by c^2") {
  const GrayImage img = testing::blob_image(36, 36, 8);
  const float c = 1.8f;
  const GrayImage scaled = c * img;
  const ResponsePyramid a = detector_response(img, {make_scale(9)});
  const ResponsePyramid b = detector_response(scaled, {make_scale(9)});
  for (Eigen::Index y = 0; y < 36; ++y)
    for (Eigen::Index x = 0; x < 36; ++x)
      CHECK(b.det[0](y, x) == doctest::Approx(c * c * a.det[0](y, x)).epsilon(1e-6).scale(1e-3));
}

TEST_CASE("invariant: additive offset leaves the interior det map unchanged") {
  const GrayImage img = testing::blob_image(40, 40, 9);
  const GrayImage shifted = img + 0.21f;
  const ScaleSpec spec = make_scale(9);
  const ResponsePyramid a = detector_response(img, {spec});
  const ResponsePyramid b = detector_response(shifted, {spec});
  for (Eigen::Index y = spec.filter_size; y < 40 - spec.filter_size; ++y)
    for (Eigen::Index x = spec.filter_size; x < 40 - spec.filter_size; ++x)
      CHECK(std::abs(a.det[0](y, x) - b.det[0](y, x)) < 1e-6f);
}

TEST_CASE("extract_keypoints: repeat calls are bitwise identical") {
  const GrayImage img = testing::blob_image(48, 48, 10);
  const ResponsePyramid pyr = detector_response(img, default_scales());
  const auto a = extract_keypoints(pyr, 1e-5f);
  const auto b = extract_keypoints(pyr, 1e-5f);
  REQUIRE(a.size() == b.size());
  REQUIRE(!a.empty());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].x == b[i].x);
    CHECK(a[i].y == b[i].y);
    CHECK(a[i].scale_index == b[i].scale_index);
    CHECK(std::memcmp(&a[i].response, &b[i].response, sizeof(float)) == 0);
  }
}

TEST_CASE("keypoints_to_csv: header plus one line per keypoint") {
  std::vector<Keypoint> kps = {{3, 4, 1, 0.25f, -1}};
  const std::string csv = keypoints_to_csv(kps);
  CHECK(csv == "x,y,scale_index,response,laplacian_sign\n3,4,1,0.25,-1\n");
  CHECK(keypoints_to_csv({}) == "x,y,scale_index,response,laplacian_sign\n");
}
