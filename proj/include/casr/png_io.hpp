#pragma once
// Grayscale PNG I/O on top of libpng. Reads normalize anything (palette,
// RGB, 16-bit, alpha) down to 8-bit gray in [0,1]; writes quantize to 8-bit.

#include <png.h>

#include <cstdio>
#include <filesystem>
#include <memory>

#include "casr/image.hpp"

namespace casr {

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace detail

// Reads a PNG as grayscale intensities in [0,1] (peak = 1).
inline Image<double> read_png_gray(const std::filesystem::path& path) {
  detail::FilePtr fp(std::fopen(path.string().c_str(), "rb"));
  if (!fp) throw IngestionError("cannot open image file " + path.string());

  unsigned char sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    throw IngestionError("not a PNG file: " + path.string());

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IngestionError("libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IngestionError("libpng init failed");
  }
  std::vector<unsigned char> pixels;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IngestionError("corrupt PNG file: " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  // Normalize every color layout to 8-bit gray.
  png_set_expand(png);
  if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
  png_set_strip_alpha(png);
  const auto color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA ||
      color == PNG_COLOR_TYPE_PALETTE)
    png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  png_read_update_info(png, info);

  const int h = static_cast<int>(png_get_image_height(png, info));
  const int w = static_cast<int>(png_get_image_width(png, info));
  if (h <= 0 || w <= 0) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IngestionError("empty PNG: " + path.string());
  }
  pixels.resize(static_cast<std::size_t>(h) * w);
  rows.resize(static_cast<std::size_t>(h));
  for (int i = 0; i < h; ++i) rows[static_cast<std::size_t>(i)] = pixels.data() + static_cast<std::size_t>(i) * w;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Image<double> img(h, w, 1.0);
  for (std::size_t i = 0; i < img.v.size(); ++i) img.v[i] = pixels[i] / 255.0;
  return img;
}

// Writes intensities quantized to 8-bit gray (round(v / peak * 255)).
template <typename T>
void write_png_gray(const std::filesystem::path& path, const Image<T>& img) {
  detail::FilePtr fp(std::fopen(path.string().c_str(), "wb"));
  if (!fp) throw IngestionError("cannot write image file " + path.string());

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IngestionError("libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IngestionError("libpng init failed");
  }
  std::vector<unsigned char> pixels(img.v.size());
  std::vector<png_bytep> rows(static_cast<std::size_t>(img.height));
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IngestionError("PNG write failed: " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height),
               8, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);

  const double peak = static_cast<double>(img.peak);
  for (std::size_t i = 0; i < img.v.size(); ++i) {
    const double x = static_cast<double>(img.v[i]) / peak * 255.0;
    pixels[i] = static_cast<unsigned char>(std::min(255.0, std::max(0.0, std::round(x))));
  }
  for (int i = 0; i < img.height; ++i)
    rows[static_cast<std::size_t>(i)] = pixels.data() + static_cast<std::size_t>(i) * img.width;
  png_set_rows(png, info, rows.data());
  png_write_png(png, info, PNG_TRANSFORM_IDENTITY, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace casr
