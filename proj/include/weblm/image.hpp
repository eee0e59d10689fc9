#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#if __has_include(<png.h>)
#include <png.h>
#define WEBLM_HAS_PNG 1
#else
#define WEBLM_HAS_PNG 0
#endif

#include "weblm/errors.hpp"

namespace weblm {

// RGB raster, channel values in [0, 1].
struct Image {
  int w = 0;
  int h = 0;
  std::vector<double> px;  // h * w * 3, row-major

  static Image filled(int w, int h, double r, double g, double b) {
    Image img;
    img.w = w;
    img.h = h;
    img.px.resize(static_cast<size_t>(w) * static_cast<size_t>(h) * 3);
    for (size_t i = 0; i < img.px.size(); i += 3) {
      img.px[i] = r;
      img.px[i + 1] = g;
      img.px[i + 2] = b;
    }
    return img;
  }

  double& at(int y, int x, int c) {
    return px[(static_cast<size_t>(y) * static_cast<size_t>(w) + static_cast<size_t>(x)) * 3 +
              static_cast<size_t>(c)];
  }
  double at(int y, int x, int c) const {
    return px[(static_cast<size_t>(y) * static_cast<size_t>(w) + static_cast<size_t>(x)) * 3 +
              static_cast<size_t>(c)];
  }

  bool valid() const {
    return w >= 1 && h >= 1 &&
           px.size() == static_cast<size_t>(w) * static_cast<size_t>(h) * 3;
  }
};

inline uint8_t quantize_u8(double v) {
  double r = std::floor(v * 255.0 + 0.5);
  return static_cast<uint8_t>(std::min(255.0, std::max(0.0, r)));
}

inline void save_ppm(const Image& img, const std::filesystem::path& path) {
  if (!img.valid()) fail(Errc::InvalidImage, "cannot save an empty raster");
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Errc::IoError, "cannot write " + path.string());
  out << "P6\n" << img.w << " " << img.h << "\n255\n";
  std::vector<uint8_t> row(static_cast<size_t>(img.w) * 3);
  for (int y = 0; y < img.h; ++y) {
    for (int x = 0; x < img.w; ++x)
      for (int c = 0; c < 3; ++c)
        row[static_cast<size_t>(x) * 3 + static_cast<size_t>(c)] = quantize_u8(img.at(y, x, c));
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
}

inline Image load_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::IoError, "cannot open " + path.string());
  std::string magic;
  in >> magic;
  if (magic != "P6") fail(Errc::InvalidImage, "not a binary PPM: " + path.string());
  auto next_int = [&]() {
    // skip whitespace and # comments
    for (;;) {
      int c = in.peek();
      if (c == '#') {
        std::string line;
        std::getline(in, line);
      } else if (std::isspace(c)) {
        in.get();
      } else {
        break;
      }
    }
    int v = -1;
    in >> v;
    return v;
  };
  int w = next_int(), h = next_int(), maxv = next_int();
  if (w < 1 || h < 1 || maxv != 255) fail(Errc::InvalidImage, "unsupported PPM: " + path.string());
  in.get();  // single whitespace after maxval
  Image img;
  img.w = w;
  img.h = h;
  img.px.resize(static_cast<size_t>(w) * static_cast<size_t>(h) * 3);
  std::vector<uint8_t> raw(img.px.size());
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size()))
    fail(Errc::InvalidImage, "truncated PPM: " + path.string());
  for (size_t i = 0; i < raw.size(); ++i) img.px[i] = raw[i] / 255.0;
  return img;
}

#if WEBLM_HAS_PNG
inline void save_png(const Image& img, const std::filesystem::path& path) {
  if (!img.valid()) fail(Errc::InvalidImage, "cannot save an empty raster");
  FILE* fp = std::fopen(path.string().c_str(), "wb");
  if (!fp) fail(Errc::IoError, "cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    std::fclose(fp);
    fail(Errc::IoError, "png write failed: " + path.string());
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.w), static_cast<png_uint_32>(img.h), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<uint8_t> row(static_cast<size_t>(img.w) * 3);
  for (int y = 0; y < img.h; ++y) {
    for (int x = 0; x < img.w; ++x)
      for (int c = 0; c < 3; ++c)
        row[static_cast<size_t>(x) * 3 + static_cast<size_t>(c)] = quantize_u8(img.at(y, x, c));
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

inline Image load_png(const std::filesystem::path& path) {
  FILE* fp = std::fopen(path.string().c_str(), "rb");
  if (!fp) fail(Errc::IoError, "cannot open " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    std::fclose(fp);
    fail(Errc::InvalidImage, "png read failed: " + path.string());
  }
  png_init_io(png, fp);
  png_read_info(png, info);
  png_uint_32 w = png_get_image_width(png, info);
  png_uint_32 h = png_get_image_height(png, info);
  int color = png_get_color_type(png, info);
  int depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  Image img;
  img.w = static_cast<int>(w);
  img.h = static_cast<int>(h);
  img.px.resize(static_cast<size_t>(w) * static_cast<size_t>(h) * 3);
  std::vector<uint8_t> row(static_cast<size_t>(w) * 3);
  for (png_uint_32 y = 0; y < h; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (png_uint_32 x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        img.at(static_cast<int>(y), static_cast<int>(x), c) =
            row[static_cast<size_t>(x) * 3 + static_cast<size_t>(c)] / 255.0;
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);
  return img;
}
#endif  // WEBLM_HAS_PNG

inline Image load_image(const std::filesystem::path& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) fail(Errc::IoError, "cannot open " + path.string());
  unsigned char sig[2] = {0, 0};
  probe.read(reinterpret_cast<char*>(sig), 2);
  probe.close();
  if (sig[0] == 'P' && sig[1] == '6') return load_ppm(path);
#if WEBLM_HAS_PNG
  if (sig[0] == 0x89 && sig[1] == 'P') return load_png(path);
#endif
  fail(Errc::InvalidImage, "unsupported raster format: " + path.string());
}

// Deterministic bilinear resize, corner-aligned: source corners map onto
// destination corners, so identity sizes round-trip exactly.
inline Image resize_bilinear(const Image& img, int side) {
  if (!img.valid() || side < 1) fail(Errc::InvalidImage, "resize needs a non-empty raster");
  if (img.w == side && img.h == side) return img;
  Image out;
  out.w = side;
  out.h = side;
  out.px.resize(static_cast<size_t>(side) * static_cast<size_t>(side) * 3);
  const double sx = side > 1 ? static_cast<double>(img.w - 1) / (side - 1) : 0.0;
  const double sy = side > 1 ? static_cast<double>(img.h - 1) / (side - 1) : 0.0;
  for (int y = 0; y < side; ++y) {
    double fy = y * sy;
    int y0 = static_cast<int>(std::floor(fy));
    int y1 = std::min(y0 + 1, img.h - 1);
    double wy = fy - y0;
    for (int x = 0; x < side; ++x) {
      double fx = x * sx;
      int x0 = static_cast<int>(std::floor(fx));
      int x1 = std::min(x0 + 1, img.w - 1);
      double wx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        double top = img.at(y0, x0, c) * (1.0 - wx) + img.at(y0, x1, c) * wx;
        double bot = img.at(y1, x0, c) * (1.0 - wx) + img.at(y1, x1, c) * wx;
        out.at(y, x, c) = top * (1.0 - wy) + bot * wy;
      }
    }
  }
  return out;
}

}  // namespace weblm
