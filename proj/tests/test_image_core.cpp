#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "dsf/core/image_io.hpp"
#include "dsf/core/integral.hpp"
#include "dsf/core/rng.hpp"
#include "dsf/detector.hpp"
#include "fixtures.hpp"

using namespace dsf;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  return fs::temp_directory_path() / ("dsf_imgcore_" + name);
}

void write_pgm_raw(const fs::path& p, int w, int h, const std::vector<unsigned char>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out << "P5\n" << w << " " << h << "\n255\n";
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("load_image: 2x2 PGM raw bytes scale to [0,1]") {
  const auto p = temp_file("2x2.pgm");
  write_pgm_raw(p, 2, 2, {0, 255, 128, 64});
  const GrayImage img = load_image(p);
  REQUIRE(img.rows() == 2);
  REQUIRE(img.cols() == 2);
  CHECK(img(0, 0) == doctest::Approx(0.0));
  CHECK(img(0, 1) == doctest::Approx(1.0));
  CHECK(img(1, 0) == doctest::Approx(128.0 / 255.0));
  CHECK(img(1, 1) == doctest::Approx(64.0 / 255.0));
  fs::remove(p);
}

TEST_CASE("load_image: pure-red PNG pixel converts with Rec.601 luma") {
  const auto p = temp_file("red.png");
  RgbImage rgb;
  rgb.height = 1;
  rgb.width = 1;
  rgb.data = {255, 0, 0};
  save_png_rgb(rgb, p);
  const GrayImage img = load_image(p);
  CHECK(img(0, 0) == doctest::Approx(0.299).epsilon(1e-6));
  fs::remove(p);
}

TEST_CASE("save/load: 8-bit gradient PGM round-trips within 1/255") {
  GrayImage img(4, 64);
  for (Eigen::Index y = 0; y < 4; ++y)
    for (Eigen::Index x = 0; x < 64; ++x) img(y, x) = static_cast<float>(x) / 63.0f;
  const auto p = temp_file("grad.pgm");
  save_image(img, p);
  const GrayImage back = load_image(p);
  CHECK(((back - img).abs() <= 1.0f / 255.0f + 1e-6f).all());
  fs::remove(p);
}

TEST_CASE("save/load: PNG gray round-trip within 1/255") {
  Rng rng(11);
  const GrayImage img = random_plane<float>(13, 17, rng);
  const auto p = temp_file("r.png");
  save_image(img, p);
  const GrayImage back = load_image(p);
  CHECK(((back - img).abs() <= 1.0f / 255.0f + 1e-6f).all());
  fs::remove(p);
}

TEST_CASE("load_image errors") {
  CHECK_THROWS(load_image(temp_file("missing_file.png")));
  const auto p = temp_file("garbage.bin");
  std::ofstream(p) << "not an image";
  CHECK_THROWS(load_image(p));
  fs::remove(p);
}

TEST_CASE("integral: counting and zero fixtures") {
  const GrayImage ones = GrayImage::Constant(3, 3, 1.0f);
  const IntegralImage ii = integral(ones);
  CHECK(ii.table(2, 2) == doctest::Approx(9.0));
  CHECK(ii.table(0, 0) == doctest::Approx(1.0));

  const GrayImage zeros = GrayImage::Zero(4, 5);
  const IntegralImage iz = integral(zeros);
  CHECK(iz.table.abs().maxCoeff() == 0.0);
}

TEST_CASE("integral: random 16x16 matches direct summation within 1e-9") {
  Rng rng(42);
  const GrayImage img = random_plane<float>(16, 16, rng);
  const IntegralImage ii = integral(img);
  for (Eigen::Index y = 0; y < 16; ++y)
    for (Eigen::Index x = 0; x < 16; ++x) {
      const double direct = testing::brute_box_sum(img, 0, 0, y + 1, x + 1);
      CHECK(ii.table(y, x) == doctest::Approx(direct).epsilon(1e-9));
    }
}

TEST_CASE("integral: exact for integer-valued 8-bit sources") {
  Rng rng(9);
  GrayImage img(12, 12);
  double total = 0.0;
  for (Eigen::Index y = 0; y < 12; ++y)
    for (Eigen::Index x = 0; x < 12; ++x) {
      const int v = static_cast<int>(rng.bounded(256));
      img(y, x) = static_cast<float>(v);
      total += v;
    }
  const IntegralImage ii = integral(img);
  CHECK(ii.table(11, 11) == total);  // integer sums are exact in double
}

TEST_CASE("box_sum: full-image rectangle and edge clamping") {
  const GrayImage ones = GrayImage::Constant(4, 4, 1.0f);
  const IntegralImage ii = integral(ones);
  CHECK(box_sum(ii, 0, 0, 4, 4) == doctest::Approx(16.0));
  // Nominal 3x3 hanging 2 px off the left edge: 3x1 overlap.
  CHECK(box_sum(ii, 0, -2, 3, 3) == doctest::Approx(3.0));
  // Fully outside.
  CHECK(box_sum(ii, -10, -10, 3, 3) == 0.0);
  CHECK(box_sum(ii, 7, 2, 3, 3) == 0.0);
}

TEST_CASE("box_sum: 1000 random rectangles match brute force within 1e-9") {
  Rng rng(123);
  const GrayImage img = random_plane<float>(32, 32, rng);
  const IntegralImage ii = integral(img);
  for (int t = 0; t < 1000; ++t) {
    const long row = static_cast<long>(rng.bounded(60)) - 20;
    const long col = static_cast<long>(rng.bounded(60)) - 20;
    const long h = 1 + static_cast<long>(rng.bounded(20));
    const long w = 1 + static_cast<long>(rng.bounded(20));
    const double expect = testing::brute_box_sum(img, row, col, h, w);
    CHECK(box_sum(ii, row, col, h, w) == doctest::Approx(expect).epsilon(1e-9).scale(1.0));
  }
}

TEST_CASE("box_sum_replicate: random rectangles match brute force") {
  Rng rng(321);
  const GrayImage img = random_plane<float>(17, 23, rng);
  const IntegralImage ii = integral(img);
  for (int t = 0; t < 1000; ++t) {
    const long row = static_cast<long>(rng.bounded(50)) - 25;
    const long col = static_cast<long>(rng.bounded(50)) - 25;
    const long h = 1 + static_cast<long>(rng.bounded(18));
    const long w = 1 + static_cast<long>(rng.bounded(18));
    const double expect = testing::brute_box_sum_replicate(img, row, col, h, w);
    CHECK(box_sum_replicate(ii, row, col, h, w) ==
          doctest::Approx(expect).epsilon(1e-9).scale(1.0));
  }
}

TEST_CASE("convolve_box_filter: 1x1 identity box") {
  Rng rng(5);
  const GrayImage img = random_plane<float>(8, 9, rng);
  const IntegralImage ii = integral(img);
  BoxFilterSpec spec;
  spec.boxes = {{0, 0, 1, 1, 1.0}};
  const GrayImage out = convolve_box_filter(ii, spec);
  CHECK(((out - img).abs() < 1e-6f).all());
}

TEST_CASE("convolve_box_filter: zero-mean filter kills constants in the interior") {
  const GrayImage c = GrayImage::Constant(16, 16, 0.7f);
  const IntegralImage ii = integral(c);
  // +1 over a 2x3 box minus 2 * (1x3 half): weights x areas sum to zero.
  BoxFilterSpec spec;
  spec.boxes = {{-1, -1, 2, 3, 1.0}, {-1, -1, 1, 3, -2.0}};
  const GrayImage out = convolve_box_filter(ii, spec);
  for (Eigen::Index y = 3; y < 13; ++y)
    for (Eigen::Index x = 3; x < 13; ++x) CHECK(std::abs(out(y, x)) < 1e-6f);
}

TEST_CASE("convolve_box_filter: L=9 D_xx matches dense convolution oracle within 1e-6") {
  Rng rng(77);
  const GrayImage img = random_plane<float>(24, 24, rng);
  const IntegralImage ii = integral(img);
  const HessianFilters f = hessian_filters(make_scale(9));
  const GrayImage out = convolve_box_filter(ii, f.dxx);

  // Dense 9x9 stencil built from the rectangle description.
  double stencil[9][9] = {};
  for (const FilterBox& b : f.dxx.boxes)
    for (int dy = b.row_offset; dy < b.row_offset + b.box_height; ++dy)
      for (int dx = b.col_offset; dx < b.col_offset + b.box_width; ++dx)
        stencil[dy + 4][dx + 4] += b.weight;

  for (Eigen::Index y = 0; y < 24; ++y)
    for (Eigen::Index x = 0; x < 24; ++x) {
      double acc = 0.0;
      for (int dy = -4; dy <= 4; ++dy)
        for (int dx = -4; dx <= 4; ++dx) {
          const Eigen::Index yy = y + dy, xx = x + dx;
          if (yy < 0 || yy >= 24 || xx < 0 || xx >= 24) continue;  // truncated boxes
          acc += stencil[dy + 4][dx + 4] * static_cast<double>(img(yy, xx));
        }
      CHECK(out(y, x) == doctest::Approx(acc).epsilon(1e-6).scale(1.0));
    }
}

TEST_CASE("convolve_box_filter: linearity") {
  Rng rng(31);
  const GrayImage a = random_plane<float>(20, 20, rng);
  const GrayImage b = random_plane<float>(20, 20, rng);
  const float ca = 1.7f, cb = -0.6f;
  const GrayImage mix = ca * a + cb * b;
  const HessianFilters f = hessian_filters(make_scale(9));
  const GrayImage out_mix = convolve_box_filter(integral(mix), f.dxy);
  const GrayImage out_a = convolve_box_filter(integral(a), f.dxy);
  const GrayImage out_b = convolve_box_filter(integral(b), f.dxy);
  CHECK(((out_mix - (ca * out_a + cb * out_b)).abs() < 1e-5f).all());
}

TEST_CASE("convolve_box_filter_adjoint: dot-product identity, both border modes") {
  Rng rng(55);
  const Eigen::Index n = 14;
  const Plane<double> img = random_plane<double>(n, n, rng);
  const Plane<double> seed = random_plane<double>(n, n, rng, -1.0, 1.0);
  const IntegralImage ii = integral(img);
  const HessianFilters f = hessian_filters(make_scale(9));
  for (const BorderMode mode : {BorderMode::Truncate, BorderMode::Replicate}) {
    const Plane<double> fwd = convolve_box_filter_t<double>(ii, f.dxx, mode);
    const Plane<double> adj = convolve_box_filter_adjoint(f.dxx, seed, mode);
    // <A img, seed> == <img, A^T seed> for a linear map.
    CHECK((fwd * seed).sum() == doctest::Approx((img * adj).sum()).epsilon(1e-12));
  }
}
