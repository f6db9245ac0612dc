#pragma once

#include <filesystem>

#include "dsf/core/plane.hpp"

namespace dsf {

/// Loads a PNG or binary PGM (P5) image as grayscale in [0,1]. RGB inputs
/// are converted with Rec.601 luma (0.299 R + 0.587 G + 0.114 B).
GrayImage load_image(const std::filesystem::path& path);

/// Writes a grayscale image as 8-bit PNG or PGM depending on the extension.
/// Values are clamped to [0,1] and rounded to the nearest level.
void save_image(const GrayImage& img, const std::filesystem::path& path);

/// Interleaved 8-bit RGB buffer, used for match visualisations.
struct RgbImage {
  Eigen::Index height = 0;
  Eigen::Index width = 0;
  std::vector<unsigned char> data;  // 3 * height * width

  unsigned char* px(Eigen::Index y, Eigen::Index x) { return data.data() + 3 * (y * width + x); }
};

RgbImage to_rgb(const GrayImage& img);
void save_png_rgb(const RgbImage& img, const std::filesystem::path& path);
void draw_line(RgbImage& img, Eigen::Index y0, Eigen::Index x0, Eigen::Index y1, Eigen::Index x1,
               unsigned char r, unsigned char g, unsigned char b);

}  // namespace dsf
