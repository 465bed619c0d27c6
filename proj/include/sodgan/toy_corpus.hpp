#pragma once

// Procedural labeled corpus: textured backgrounds plus 1-3 foreground
// primitives whose shape family and hue range are fixed by the class id.
// The mask is the exact union of painted foreground pixels, and everything
// is a pure function of (seed, class, size).

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include <json.hpp>

#include "sodgan/rng.hpp"
#include "sodgan/stats.hpp"
#include "sodgan/threading.hpp"
#include "sodgan/types.hpp"

namespace sodgan {

namespace detail {

inline void hsv_to_rgb(double h, double s, double v, float rgb[3]) {
  h = h - std::floor(h);
  const double c = v * s;
  const double hp = h * 6.0;
  const double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(hp) % 6) {
    case 0: r = c, g = x; break;
    case 1: r = x, g = c; break;
    case 2: g = c, b = x; break;
    case 3: g = x, b = c; break;
    case 4: r = x, b = c; break;
    default: r = c, b = x; break;
  }
  const double m = v - c;
  rgb[0] = static_cast<float>(r + m);
  rgb[1] = static_cast<float>(g + m);
  rgb[2] = static_cast<float>(b + m);
}

// Bilinear value noise on a lattice with the given cell size.
struct ValueNoise {
  int cells;
  int cell_px;
  std::vector<double> lattice;  // (cells+1)^2

  ValueNoise(int size, int cell_px_, Rng& rng) : cell_px(cell_px_) {
    cells = (size + cell_px - 1) / cell_px;
    lattice.resize(static_cast<std::size_t>(cells + 1) * (cells + 1));
    for (auto& v : lattice) v = rng.uniform(-1.0, 1.0);
  }

  double at(int y, int x) const {
    const double fy = static_cast<double>(y) / cell_px, fx = static_cast<double>(x) / cell_px;
    const int y0 = std::min(static_cast<int>(fy), cells - 1);
    const int x0 = std::min(static_cast<int>(fx), cells - 1);
    const double wy = fy - y0, wx = fx - x0;
    auto l = [&](int yy, int xx) { return lattice[static_cast<std::size_t>(yy) * (cells + 1) + xx]; };
    return (1 - wy) * ((1 - wx) * l(y0, x0) + wx * l(y0, x0 + 1)) +
           wy * ((1 - wx) * l(y0 + 1, x0) + wx * l(y0 + 1, x0 + 1));
  }
};

constexpr int kShapeFamilies = 8;

inline double class_hue(ClassLabel c) {
  const double golden = 0.618033988749895;
  return 0.11 + c * golden - std::floor(0.11 + c * golden);
}

struct ShapeParams {
  int family;
  double cx, cy, r;
  double aspect;  // rectangles / ellipses
};

inline bool shape_contains(const ShapeParams& s, double x, double y) {
  const double dx = x - s.cx, dy = y - s.cy;
  switch (s.family) {
    case 0:  // circle
      return dx * dx + dy * dy <= s.r * s.r;
    case 1: {  // elongated rectangle
      const double a = s.r * std::sqrt(s.aspect), b = s.r / std::sqrt(s.aspect);
      return std::fabs(dx) <= a && std::fabs(dy) <= b;
    }
    case 2: {  // isoceles triangle, apex up
      const double top = s.cy - s.r, base = s.cy + 0.75 * s.r, half = 0.95 * s.r;
      if (y < top || y > base) return false;
      const double t = (y - top) / (base - top);
      return std::fabs(dx) <= half * t;
    }
    case 3: {  // ring
      const double ro = 1.15 * s.r, ri = 0.55 * ro;
      const double d2 = dx * dx + dy * dy;
      return d2 <= ro * ro && d2 >= ri * ri;
    }
    case 4: {  // plus
      const double t = 0.38 * s.r, l = 1.1 * s.r;
      return (std::fabs(dx) <= l && std::fabs(dy) <= t) ||
             (std::fabs(dx) <= t && std::fabs(dy) <= l);
    }
    case 5:  // diamond
      return std::fabs(dx) + std::fabs(dy) <= 1.3 * s.r;
    case 6: {  // wide ellipse
      const double a = 1.4 * s.r, b = 0.7 * s.r;
      const double u = dx / a, v = dy / b;
      return u * u + v * v <= 1.0;
    }
    default: {  // flat-top hexagon
      const double R = 1.15 * s.r;
      const double s3 = std::sqrt(3.0);
      return std::fabs(dy) <= s3 / 2.0 * R && s3 * std::fabs(dx) + std::fabs(dy) <= s3 * R;
    }
  }
}

}  // namespace detail

// One scene: returns the quantized RGB image and its exact binary mask.
// Foreground fraction is kept within [0.05, 0.5] by redrawing, with a
// deterministic centered-circle fallback.
inline std::pair<Image, Mask> generate_scene(std::uint64_t seed, ClassLabel class_id, int size) {
  require(size >= 16, ErrKind::invalid_argument, "generate_scene: size must be >= 16");
  require(class_id >= 0, ErrKind::invalid_argument, "generate_scene: class id must be >= 0");
  Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(class_id), static_cast<std::uint64_t>(size),
                             0xA11CEull}));

  const int family = class_id % detail::kShapeFamilies;
  const double hue_fg = detail::class_hue(class_id);

  for (int attempt = 0; attempt < 40; ++attempt) {
    Image img(size, size);
    Mask mask(size, size, true);

    // Background: muted hue, base value, gradient, two noise octaves.
    const double hue_bg = rng.uniform();
    const double sat_bg = rng.uniform(0.05, 0.22);
    const double v0 = rng.uniform(0.30, 0.50);
    const double grad_amp = rng.uniform(0.05, 0.15);
    const double grad_dir = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
    detail::ValueNoise coarse(size, std::max(4, size / 4), rng);
    detail::ValueNoise fine(size, std::max(2, size / 8), rng);

    // Foreground shapes.
    const double u = rng.uniform();
    const int nshapes = u < 0.7 ? 1 : (u < 0.9 ? 2 : 3);
    std::vector<detail::ShapeParams> shapes;
    std::vector<std::array<float, 3>> colors;
    for (int i = 0; i < nshapes; ++i) {
      detail::ShapeParams s;
      s.family = family;
      s.cx = rng.uniform(0.28, 0.72) * size;
      s.cy = rng.uniform(0.28, 0.72) * size;
      s.r = rng.uniform(0.13, 0.24) * size / std::sqrt(static_cast<double>(nshapes));
      s.aspect = rng.uniform(1.8, 2.6);
      shapes.push_back(s);
      std::array<float, 3> rgb{};
      detail::hsv_to_rgb(hue_fg + rng.uniform(-0.03, 0.03), rng.uniform(0.70, 0.95),
                         rng.uniform(0.72, 0.95), rgb.data());
      colors.push_back(rgb);
    }
    detail::ValueNoise fgnoise(size, std::max(2, size / 8), rng);

    const double cd = std::cos(grad_dir), sd = std::sin(grad_dir);
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        int hit = -1;
        for (int i = nshapes - 1; i >= 0; --i) {
          if (detail::shape_contains(shapes[i], x + 0.5, y + 0.5)) {
            hit = i;
            break;
          }
        }
        if (hit >= 0) {
          mask.at(y, x) = 1.f;
          const double mod = 1.0 + 0.05 * fgnoise.at(y, x);
          for (int c = 0; c < 3; ++c)
            img.at(c, y, x) = static_cast<float>(std::clamp(colors[hit][c] * mod, 0.0, 1.0));
        } else {
          const double g = ((x + 0.5) * cd + (y + 0.5) * sd) / size - 0.5;
          const double val = std::clamp(
              v0 + grad_amp * g + 0.06 * coarse.at(y, x) + 0.03 * fine.at(y, x), 0.02, 0.66);
          float rgb[3];
          detail::hsv_to_rgb(hue_bg, sat_bg, val, rgb);
          for (int c = 0; c < 3; ++c) img.at(c, y, x) = rgb[c];
        }
      }
    }

    const double frac = mask.foreground_fraction();
    if (frac >= 0.05 && frac <= 0.5) {
      for (auto& v : img.v) v = std::lround(std::clamp(v, 0.f, 1.f) * 255.f) / 255.f;
      return {std::move(img), std::move(mask)};
    }
  }

  // Fallback: centered circle of the class hue on a flat background.
  Image img(size, size);
  Mask mask(size, size, true);
  float fg[3], bg[3];
  detail::hsv_to_rgb(hue_fg, 0.85, 0.85, fg);
  detail::hsv_to_rgb(hue_fg + 0.5, 0.1, 0.4, bg);
  const double r = 0.25 * size;
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double dx = x + 0.5 - size / 2.0, dy = y + 0.5 - size / 2.0;
      const bool in = dx * dx + dy * dy <= r * r;
      mask.at(y, x) = in ? 1.f : 0.f;
      for (int c = 0; c < 3; ++c) img.at(c, y, x) = in ? fg[c] : bg[c];
    }
  }
  for (auto& v : img.v) v = std::lround(std::clamp(v, 0.f, 1.f) * 255.f) / 255.f;
  return {std::move(img), std::move(mask)};
}

// Balanced corpus with a deterministic per-class 80/20 split (test entries
// are the lowest-ranked fifth under a per-entry hash).
inline Corpus build_corpus(int n_per_class, int class_count, std::uint64_t seed, int size = 64,
                           int threads = 1) {
  require(n_per_class >= 1, ErrKind::invalid_argument, "build_corpus: n_per_class must be >= 1");
  require(class_count >= 2, ErrKind::invalid_argument, "build_corpus: class count must be >= 2");
  Corpus c;
  c.class_count = class_count;
  c.img_size = size;
  c.entries.resize(static_cast<std::size_t>(n_per_class) * class_count);

  const int n_test = n_per_class / 5;
  std::vector<char> is_test(c.entries.size(), 0);
  for (int cls = 0; cls < class_count; ++cls) {
    std::vector<std::pair<std::uint64_t, int>> ranked;
    for (int i = 0; i < n_per_class; ++i)
      ranked.emplace_back(derive_seed(seed, {static_cast<std::uint64_t>(cls),
                                             static_cast<std::uint64_t>(i), 0x5EEDull}),
                          i);
    std::sort(ranked.begin(), ranked.end());
    for (int j = 0; j < n_test; ++j) is_test[static_cast<std::size_t>(cls) * n_per_class + ranked[j].second] = 1;
  }

  parallel_for(static_cast<int>(c.entries.size()), threads, [&](int idx) {
    const int cls = idx / n_per_class;
    const int i = idx % n_per_class;
    CorpusEntry& e = c.entries[idx];
    e.id = idx;
    e.class_id = cls;
    e.seed = derive_seed(seed, {static_cast<std::uint64_t>(cls), static_cast<std::uint64_t>(i),
                                0xC0FFEEull});
    e.is_test = is_test[idx] != 0;
    auto [img, mask] = generate_scene(e.seed, cls, size);
    e.image = std::move(img);
    e.mask = std::move(mask);
  });
  return c;
}

inline StatsReport corpus_stats(const Corpus& corpus) {
  require(!corpus.entries.empty(), ErrKind::empty_input, "corpus_stats: empty corpus");
  std::vector<PairView> pairs;
  pairs.reserve(corpus.entries.size());
  for (const auto& e : corpus.entries) pairs.push_back({&e.image, &e.mask, e.class_id});
  return compute_stats(pairs);
}

// --- persistence -----------------------------------------------------------
// layout: images/{id}.png (RGB), masks/{id}.png (gray, 0/255), corpus.jsonl

inline void save_corpus(const Corpus& corpus, const fs::path& dir) {
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "masks");
  std::string jsonl;
  for (const auto& e : corpus.entries) {
    const std::string fid = entry_file_id(e.id);
    save_image_png(dir / "images" / (fid + ".png"), e.image);
    save_mask_png(dir / "masks" / (fid + ".png"), e.mask);
    nlohmann::json rec{{"id", e.id},
                       {"class", e.class_id},
                       {"seed", e.seed},
                       {"split", e.is_test ? "test" : "train"}};
    jsonl += rec.dump() + "\n";
  }
  write_text_file(dir / "corpus.jsonl", jsonl);
}

inline Corpus load_corpus(const fs::path& dir) {
  require(fs::exists(dir / "corpus.jsonl"), ErrKind::dependency,
          "corpus.jsonl not found under " + dir.string());
  Corpus c;
  std::istringstream in(read_text_file(dir / "corpus.jsonl"));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json rec = nlohmann::json::parse(line);
    CorpusEntry e;
    e.id = rec.at("id").get<int>();
    e.class_id = rec.at("class").get<int>();
    e.seed = rec.at("seed").get<std::uint64_t>();
    e.is_test = rec.at("split").get<std::string>() == "test";
    const std::string fid = entry_file_id(e.id);
    e.image = load_image_png(dir / "images" / (fid + ".png"));
    e.mask = load_mask_png(dir / "masks" / (fid + ".png"), /*binarize=*/true);
    require(e.image.h == e.mask.h && e.image.w == e.mask.w, ErrKind::corrupt_dataset,
            "corpus: image/mask size mismatch for id " + std::to_string(e.id));
    c.class_count = std::max(c.class_count, e.class_id + 1);
    if (c.img_size == 0) c.img_size = e.image.h;
    require(e.image.h == c.img_size && e.image.w == c.img_size, ErrKind::corrupt_dataset,
            "corpus: inconsistent image sizes");
    c.entries.push_back(std::move(e));
  }
  require(!c.entries.empty(), ErrKind::corrupt_dataset, "corpus: no entries in " + dir.string());
  return c;
}

}  // namespace sodgan
