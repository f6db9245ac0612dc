#include "dsf/core/image_io.hpp"

#include <png.h>

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace dsf {

namespace {

constexpr double kLumaR = 0.299, kLumaG = 0.587, kLumaB = 0.114;

[[noreturn]] void fail(const std::filesystem::path& p, const std::string& what) {
  throw std::runtime_error(p.string() + ": " + what);
}

std::string lower_ext(const std::filesystem::path& p) {
  std::string e = p.extension().string();
  for (char& c : e) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return e;
}

// ---- PGM (P5) ----

int pgm_next_int(std::istream& in) {
  // Skips whitespace and '#' comment lines between header tokens.
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (!std::isspace(c)) {
      break;
    }
    c = in.get();
  }
  if (c == EOF) return -1;
  int v = 0;
  bool any = false;
  while (c != EOF && std::isdigit(c)) {
    v = v * 10 + (c - '0');
    any = true;
    c = in.get();
  }
  return any ? v : -1;
}

GrayImage load_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open file");
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (magic[0] != 'P' || magic[1] != '5') fail(path, "unsupported format (want binary PGM P5)");
  const int w = pgm_next_int(in);
  const int h = pgm_next_int(in);
  const int maxval = pgm_next_int(in);
  if (w <= 0 || h <= 0) fail(path, "zero-dimension image");
  if (maxval <= 0 || maxval >= 65536) fail(path, "bad PGM maxval");
  // Header ends with exactly one whitespace byte, already consumed by
  // pgm_next_int's trailing get().
  const std::size_t bpp = maxval < 256 ? 1 : 2;
  std::vector<unsigned char> raw(bpp * static_cast<std::size_t>(w) * h);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size()) fail(path, "truncated PGM payload");

  GrayImage img(h, w);
  const float inv = 1.0f / static_cast<float>(maxval);
  for (Eigen::Index y = 0; y < h; ++y)
    for (Eigen::Index x = 0; x < w; ++x) {
      const std::size_t i = bpp * (static_cast<std::size_t>(y) * w + x);
      unsigned v = bpp == 1 ? raw[i] : (static_cast<unsigned>(raw[i]) << 8) | raw[i + 1];
      img(y, x) = static_cast<float>(v) * inv;
    }
  return img;
}

void save_pgm(const GrayImage& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(path, "cannot open file for writing");
  out << "P5\n" << img.cols() << " " << img.rows() << "\n255\n";
  std::vector<unsigned char> row(static_cast<std::size_t>(img.cols()));
  for (Eigen::Index y = 0; y < img.rows(); ++y) {
    for (Eigen::Index x = 0; x < img.cols(); ++x) {
      const float v = std::min(1.0f, std::max(0.0f, img(y, x)));
      row[static_cast<std::size_t>(x)] = static_cast<unsigned char>(std::lround(v * 255.0f));
    }
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!out) fail(path, "write failed");
}

// ---- PNG ----

struct PngReadCtx {
  png_structp png = nullptr;
  png_infop info = nullptr;
  std::FILE* fp = nullptr;
  ~PngReadCtx() {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    if (fp) std::fclose(fp);
  }
};

GrayImage load_png(const std::filesystem::path& path) {
  PngReadCtx ctx;
  ctx.fp = std::fopen(path.c_str(), "rb");
  if (!ctx.fp) fail(path, "cannot open file");
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, ctx.fp) != 8 || png_sig_cmp(sig, 0, 8))
    fail(path, "unsupported format (bad PNG signature)");
  ctx.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!ctx.png) fail(path, "png_create_read_struct failed");
  ctx.info = png_create_info_struct(ctx.png);
  if (!ctx.info) fail(path, "png_create_info_struct failed");
  if (setjmp(png_jmpbuf(ctx.png))) fail(path, "PNG decode error");
  png_init_io(ctx.png, ctx.fp);
  png_set_sig_bytes(ctx.png, 8);
  png_read_info(ctx.png, ctx.info);

  // Normalise everything to 8-bit gray or RGB.
  png_set_expand(ctx.png);
  png_set_strip_16(ctx.png);
  png_set_strip_alpha(ctx.png);
  png_read_update_info(ctx.png, ctx.info);

  const png_uint_32 w = png_get_image_width(ctx.png, ctx.info);
  const png_uint_32 h = png_get_image_height(ctx.png, ctx.info);
  const png_byte channels = png_get_channels(ctx.png, ctx.info);
  if (w == 0 || h == 0) fail(path, "zero-dimension image");
  if (channels != 1 && channels != 3) fail(path, "unsupported PNG channel layout");

  std::vector<unsigned char> rowbuf(static_cast<std::size_t>(w) * channels);
  GrayImage img(static_cast<Eigen::Index>(h), static_cast<Eigen::Index>(w));
  for (png_uint_32 y = 0; y < h; ++y) {
    png_read_row(ctx.png, rowbuf.data(), nullptr);
    for (png_uint_32 x = 0; x < w; ++x) {
      float v;
      if (channels == 1) {
        v = static_cast<float>(rowbuf[x]) / 255.0f;
      } else {
        const unsigned char* p = &rowbuf[3 * x];
        v = static_cast<float>((kLumaR * p[0] + kLumaG * p[1] + kLumaB * p[2]) / 255.0);
      }
      img(static_cast<Eigen::Index>(y), static_cast<Eigen::Index>(x)) = v;
    }
  }
  png_read_end(ctx.png, nullptr);
  return img;
}

struct PngWriteCtx {
  png_structp png = nullptr;
  png_infop info = nullptr;
  std::FILE* fp = nullptr;
  ~PngWriteCtx() {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    if (fp) std::fclose(fp);
  }
};

void write_png(const std::filesystem::path& path, Eigen::Index h, Eigen::Index w, int color_type,
               const std::vector<unsigned char>& data, std::size_t stride) {
  PngWriteCtx ctx;
  ctx.fp = std::fopen(path.c_str(), "wb");
  if (!ctx.fp) fail(path, "cannot open file for writing");
  ctx.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!ctx.png) fail(path, "png_create_write_struct failed");
  ctx.info = png_create_info_struct(ctx.png);
  if (!ctx.info) fail(path, "png_create_info_struct failed");
  if (setjmp(png_jmpbuf(ctx.png))) fail(path, "PNG encode error");
  png_init_io(ctx.png, ctx.fp);
  png_set_IHDR(ctx.png, ctx.info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
               color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(ctx.png, ctx.info);
  for (Eigen::Index y = 0; y < h; ++y)
    png_write_row(ctx.png, const_cast<png_bytep>(data.data() + static_cast<std::size_t>(y) * stride));
  png_write_end(ctx.png, nullptr);
}

void save_png_gray(const GrayImage& img, const std::filesystem::path& path) {
  const Eigen::Index h = img.rows(), w = img.cols();
  std::vector<unsigned char> data(static_cast<std::size_t>(h) * w);
  for (Eigen::Index y = 0; y < h; ++y)
    for (Eigen::Index x = 0; x < w; ++x) {
      const float v = std::min(1.0f, std::max(0.0f, img(y, x)));
      data[static_cast<std::size_t>(y) * w + x] = static_cast<unsigned char>(std::lround(v * 255.0f));
    }
  write_png(path, h, w, PNG_COLOR_TYPE_GRAY, data, static_cast<std::size_t>(w));
}

}  // namespace

GrayImage load_image(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(path, "file does not exist");
  const std::string ext = lower_ext(path);
  GrayImage img;
  if (ext == ".pgm") {
    img = load_pgm(path);
  } else if (ext == ".png") {
    img = load_png(path);
  } else {
    // Sniff the magic rather than trusting the extension.
    std::ifstream in(path, std::ios::binary);
    char m[2] = {0, 0};
    in.read(m, 2);
    if (m[0] == 'P' && m[1] == '5')
      img = load_pgm(path);
    else if (static_cast<unsigned char>(m[0]) == 0x89 && m[1] == 'P')
      img = load_png(path);
    else
      fail(path, "unsupported format (want PNG or binary PGM)");
  }
  if (img.rows() == 0 || img.cols() == 0) fail(path, "zero-dimension image");
  if (!all_finite(img)) fail(path, "non-finite pixel values");
  return img;
}

void save_image(const GrayImage& img, const std::filesystem::path& path) {
  if (img.rows() == 0 || img.cols() == 0) fail(path, "zero-dimension image");
  const std::string ext = lower_ext(path);
  if (ext == ".pgm")
    save_pgm(img, path);
  else if (ext == ".png")
    save_png_gray(img, path);
  else
    fail(path, "unsupported output format (want .png or .pgm)");
}

RgbImage to_rgb(const GrayImage& img) {
  RgbImage rgb;
  rgb.height = img.rows();
  rgb.width = img.cols();
  rgb.data.resize(static_cast<std::size_t>(3) * img.rows() * img.cols());
  for (Eigen::Index y = 0; y < img.rows(); ++y)
    for (Eigen::Index x = 0; x < img.cols(); ++x) {
      const float v = std::min(1.0f, std::max(0.0f, img(y, x)));
      const auto b = static_cast<unsigned char>(std::lround(v * 255.0f));
      unsigned char* p = rgb.px(y, x);
      p[0] = p[1] = p[2] = b;
    }
  return rgb;
}

void save_png_rgb(const RgbImage& img, const std::filesystem::path& path) {
  write_png(path, img.height, img.width, PNG_COLOR_TYPE_RGB, img.data,
            static_cast<std::size_t>(3) * img.width);
}

void draw_line(RgbImage& img, Eigen::Index y0, Eigen::Index x0, Eigen::Index y1, Eigen::Index x1,
               unsigned char r, unsigned char g, unsigned char b) {
  // Bresenham.
  Eigen::Index dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
  Eigen::Index sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
  Eigen::Index err = dx + dy;
  while (true) {
    if (y0 >= 0 && y0 < img.height && x0 >= 0 && x0 < img.width) {
      unsigned char* p = img.px(y0, x0);
      p[0] = r;
      p[1] = g;
      p[2] = b;
    }
    if (x0 == x1 && y0 == y1) break;
    const Eigen::Index e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

}  // namespace dsf
