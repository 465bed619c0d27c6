#pragma once

// Domain currency shared by all stages: images and masks in [0,1], class
// labels, latent codes, feature pyramids and the labeled corpus.

#include <cmath>
#include <cstdint>
#include <vector>

#include "sodgan/common.hpp"
#include "sodgan/io/png_io.hpp"
#include "sodgan/tensor.hpp"

namespace sodgan {

// RGB raster, values in [0,1], stored channel-major (3,h,w). Values written
// by the corpus generator and by PNG round-trips live on the k/255 grid.
struct Image {
  int h = 0, w = 0;
  std::vector<float> v;  // (3,h,w)

  Image() = default;
  Image(int h_, int w_) : h(h_), w(w_), v(static_cast<std::size_t>(3) * h_ * w_, 0.f) {}

  float& at(int c, int y, int x) { return v[(static_cast<std::size_t>(c) * h + y) * w + x]; }
  float at(int c, int y, int x) const { return v[(static_cast<std::size_t>(c) * h + y) * w + x]; }

  Tensor<float> tensor() const { return Tensor<float>({3, h, w}, v); }
};

// Single-channel raster in [0,1]; `binary` asserts every value is 0 or 1.
struct Mask {
  int h = 0, w = 0;
  bool binary = false;
  std::vector<float> v;  // (h,w)

  Mask() = default;
  Mask(int h_, int w_, bool binary_ = false)
      : h(h_), w(w_), binary(binary_), v(static_cast<std::size_t>(h_) * w_, 0.f) {}

  float& at(int y, int x) { return v[static_cast<std::size_t>(y) * w + x]; }
  float at(int y, int x) const { return v[static_cast<std::size_t>(y) * w + x]; }

  double foreground_fraction() const {
    double s = 0;
    for (float p : v) s += p;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
  }

  Mask binarize(float threshold = 0.5f) const {
    Mask m(h, w, true);
    for (std::size_t i = 0; i < v.size(); ++i) m.v[i] = v[i] > threshold ? 1.f : 0.f;
    return m;
  }

  void check_binary() const {
    require(binary, ErrKind::invalid_argument, "mask: binary flag not set");
    for (float p : v)
      require(p == 0.f || p == 1.f, ErrKind::invalid_argument, "mask: non-binary value");
  }
};

using ClassLabel = int;

// Zero-padded raster file id shared by the corpus and synthetic layouts.
inline std::string entry_file_id(int id) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06d", id);
  return buf;
}

struct LatentCode {
  std::vector<float> v;
  bool embedded = false;  // false: sampled z, true: encoder output z+
};

// Ordered per-block activations of the image generator, coarse to fine; the
// final level matches the output resolution.
struct FeaturePyramid {
  std::vector<Tensor<float>> levels;
};

struct CorpusEntry {
  int id = 0;
  ClassLabel class_id = 0;
  std::uint64_t seed = 0;
  bool is_test = false;
  Image image;
  Mask mask;
};

struct Corpus {
  int class_count = 0;
  int img_size = 0;
  std::vector<CorpusEntry> entries;

  std::vector<const CorpusEntry*> split(bool test) const {
    std::vector<const CorpusEntry*> out;
    for (const auto& e : entries)
      if (e.is_test == test) out.push_back(&e);
    return out;
  }
};

// --- PNG conversions (k/255 grid, bit-exact round trips) -------------------

inline std::vector<unsigned char> image_to_bytes(const Image& img) {
  std::vector<unsigned char> b(static_cast<std::size_t>(img.h) * img.w * 3);
  std::size_t i = 0;
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x)
      for (int c = 0; c < 3; ++c)
        b[i++] = static_cast<unsigned char>(std::lround(img.at(c, y, x) * 255.0f));
  return b;
}

inline Image image_from_bytes(const PngBuffer& png) {
  require(png.channels == 3, ErrKind::corrupt_dataset, "expected RGB png");
  Image img(png.h, png.w);
  std::size_t i = 0;
  for (int y = 0; y < png.h; ++y)
    for (int x = 0; x < png.w; ++x)
      for (int c = 0; c < 3; ++c) img.at(c, y, x) = static_cast<float>(png.bytes[i++]) / 255.f;
  return img;
}

inline std::vector<unsigned char> mask_to_bytes(const Mask& m) {
  std::vector<unsigned char> b(static_cast<std::size_t>(m.h) * m.w);
  for (std::size_t i = 0; i < b.size(); ++i)
    b[i] = static_cast<unsigned char>(std::lround(m.v[i] * 255.0f));
  return b;
}

inline Mask mask_from_bytes(const PngBuffer& png, bool binarize) {
  require(png.channels == 1, ErrKind::corrupt_dataset, "expected grayscale png");
  Mask m(png.h, png.w, binarize);
  for (std::size_t i = 0; i < m.v.size(); ++i) {
    const float p = static_cast<float>(png.bytes[i]) / 255.f;
    m.v[i] = binarize ? (png.bytes[i] >= 128 ? 1.f : 0.f) : p;
  }
  return m;
}

inline void save_image_png(const fs::path& path, const Image& img) {
  const auto bytes = image_to_bytes(img);
  write_png(path, img.h, img.w, 3, bytes.data());
}

inline Image load_image_png(const fs::path& path) { return image_from_bytes(read_png(path)); }

inline void save_mask_png(const fs::path& path, const Mask& m) {
  const auto bytes = mask_to_bytes(m);
  write_png(path, m.h, m.w, 1, bytes.data());
}

inline Mask load_mask_png(const fs::path& path, bool binarize) {
  return mask_from_bytes(read_png(path), binarize);
}

}  // namespace sodgan
