#pragma once

// Thin libpng wrapper for the two raster kinds the pipeline persists:
// 8-bit RGB images and 8-bit grayscale masks.

#include <png.h>

#include <cstdio>
#include <vector>

#include "sodgan/common.hpp"

namespace sodgan {

struct PngBuffer {
  int h = 0, w = 0, channels = 0;  // channels: 1 (gray) or 3 (rgb)
  std::vector<unsigned char> bytes;  // row-major, h*w*channels
};

inline void write_png(const fs::path& path, int h, int w, int channels,
                      const unsigned char* data) {
  require(channels == 1 || channels == 3, ErrKind::invalid_argument,
          "write_png: channels must be 1 or 3");
  FILE* fp = std::fopen(path.string().c_str(), "wb");
  require(fp != nullptr, ErrKind::io, "cannot open for writing: " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    fail(ErrKind::io, "libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    fail(ErrKind::io, "png write failed: " + path.string());
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
               channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(h);
  for (int y = 0; y < h; ++y)
    rows[y] = const_cast<png_bytep>(data + static_cast<std::size_t>(y) * w * channels);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

inline PngBuffer read_png(const fs::path& path) {
  FILE* fp = std::fopen(path.string().c_str(), "rb");
  require(fp != nullptr, ErrKind::io, "cannot open for reading: " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    fail(ErrKind::io, "libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    fail(ErrKind::corrupt_dataset, "png read failed: " + path.string());
  }
  png_init_io(png, fp);
  png_read_info(png, info);

  png_set_strip_16(png);
  png_set_packing(png);
  const png_byte color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8)
    png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  PngBuffer out;
  out.h = static_cast<int>(png_get_image_height(png, info));
  out.w = static_cast<int>(png_get_image_width(png, info));
  out.channels = static_cast<int>(png_get_channels(png, info));
  if (out.channels != 1 && out.channels != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    fail(ErrKind::corrupt_dataset, "unsupported png channel count: " + path.string());
  }
  out.bytes.resize(static_cast<std::size_t>(out.h) * out.w * out.channels);
  std::vector<png_bytep> rows(out.h);
  for (int y = 0; y < out.h; ++y)
    rows[y] = out.bytes.data() + static_cast<std::size_t>(y) * out.w * out.channels;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);
  return out;
}

}  // namespace sodgan
