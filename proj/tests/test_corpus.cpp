#include <catch2/catch_amalgamated.hpp>

#include <deque>

#include "sodgan/toy_corpus.hpp"

using namespace sodgan;

namespace {

int connected_components(const Mask& m) {
  std::vector<char> seen(m.v.size(), 0);
  int comps = 0;
  for (int y0 = 0; y0 < m.h; ++y0) {
    for (int x0 = 0; x0 < m.w; ++x0) {
      if (m.at(y0, x0) < 0.5f || seen[y0 * m.w + x0]) continue;
      ++comps;
      std::deque<std::pair<int, int>> q{{y0, x0}};
      seen[y0 * m.w + x0] = 1;
      while (!q.empty()) {
        auto [y, x] = q.front();
        q.pop_front();
        const int dy[] = {1, -1, 0, 0}, dx[] = {0, 0, 1, -1};
        for (int k = 0; k < 4; ++k) {
          const int ny = y + dy[k], nx = x + dx[k];
          if (ny < 0 || ny >= m.h || nx < 0 || nx >= m.w) continue;
          if (m.at(ny, nx) < 0.5f || seen[ny * m.w + nx]) continue;
          seen[ny * m.w + nx] = 1;
          q.emplace_back(ny, nx);
        }
      }
    }
  }
  return comps;
}

// Second-moment eccentricity of the mask foreground: 0 for a disc,
// approaching 1 for elongated shapes.
double mask_eccentricity(const Mask& m) {
  double n = 0, mx = 0, my = 0;
  for (int y = 0; y < m.h; ++y)
    for (int x = 0; x < m.w; ++x)
      if (m.at(y, x) > 0.5f) {
        n += 1;
        mx += x;
        my += y;
      }
  mx /= n;
  my /= n;
  double sxx = 0, syy = 0, sxy = 0;
  for (int y = 0; y < m.h; ++y)
    for (int x = 0; x < m.w; ++x)
      if (m.at(y, x) > 0.5f) {
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
      }
  sxx /= n;
  syy /= n;
  sxy /= n;
  const double tr = sxx + syy;
  const double det = sxx * syy - sxy * sxy;
  const double disc = std::sqrt(std::max(0.0, tr * tr / 4 - det));
  const double l1 = tr / 2 + disc, l2 = tr / 2 - disc;
  return l1 <= 0 ? 0.0 : std::sqrt(std::max(0.0, 1.0 - l2 / l1));
}

}  // namespace

TEST_CASE("generate_scene is deterministic and respects bounds", "[corpus]") {
  auto [img1, m1] = generate_scene(7, 3, 64);
  auto [img2, m2] = generate_scene(7, 3, 64);
  REQUIRE(img1.v == img2.v);
  REQUIRE(m1.v == m2.v);

  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    for (ClassLabel cls : {0, 1, 5, 7}) {
      auto [img, mask] = generate_scene(seed, cls, 64);
      const double f = mask.foreground_fraction();
      REQUIRE(f >= 0.05);
      REQUIRE(f <= 0.5);
      mask.check_binary();
      for (float v : img.v) {
        REQUIRE(v >= 0.f);
        REQUIRE(v <= 1.f);
      }
    }
  }
  REQUIRE_THROWS_AS(generate_scene(1, 0, 15), Error);
}

TEST_CASE("class families are visually distinct shapes", "[corpus]") {
  // Compare second-moment eccentricity between the disc class (0) and the
  // elongated-rectangle class (1) on single-component scenes.
  double circ = 0, rect = 0;
  int n_circ = 0, n_rect = 0;
  for (std::uint64_t seed = 0; seed < 300 && (n_circ < 12 || n_rect < 12); ++seed) {
    auto [ic, mc] = generate_scene(seed, 0, 64);
    if (n_circ < 12 && connected_components(mc) == 1) {
      circ += mask_eccentricity(mc);
      ++n_circ;
    }
    auto [ir, mr] = generate_scene(seed, 1, 64);
    if (n_rect < 12 && connected_components(mr) == 1) {
      rect += mask_eccentricity(mr);
      ++n_rect;
    }
  }
  REQUIRE(n_circ == 12);
  REQUIRE(n_rect == 12);
  circ /= n_circ;
  rect /= n_rect;
  INFO("mean eccentricity disc=" << circ << " rect=" << rect);
  REQUIRE(circ + 0.2 < rect);
}

TEST_CASE("build_corpus balance, split and determinism", "[corpus]") {
  const Corpus c = build_corpus(10, 8, 1, 32);
  REQUIRE(c.entries.size() == 80);
  std::map<int, int> per_class, test_per_class;
  for (const auto& e : c.entries) {
    per_class[e.class_id] += 1;
    if (e.is_test) test_per_class[e.class_id] += 1;
  }
  for (int cls = 0; cls < 8; ++cls) {
    REQUIRE(per_class[cls] == 10);
    REQUIRE(test_per_class[cls] == 2);
  }

  const Corpus c2 = build_corpus(10, 8, 1, 32);
  for (std::size_t i = 0; i < c.entries.size(); ++i) {
    REQUIRE(c.entries[i].image.v == c2.entries[i].image.v);
    REQUIRE(c.entries[i].is_test == c2.entries[i].is_test);
  }

  REQUIRE_THROWS_AS(build_corpus(0, 8, 1), Error);
  REQUIRE_THROWS_AS(build_corpus(10, 1, 1), Error);
}

TEST_CASE("corpus generation is independent of thread count", "[corpus]") {
  const Corpus a = build_corpus(6, 3, 9, 32, 1);
  const Corpus b = build_corpus(6, 3, 9, 32, 2);
  REQUIRE(a.entries.size() == b.entries.size());
  for (std::size_t i = 0; i < a.entries.size(); ++i) {
    REQUIRE(a.entries[i].image.v == b.entries[i].image.v);
    REQUIRE(a.entries[i].mask.v == b.entries[i].mask.v);
  }
}

TEST_CASE("corpus_stats oracles", "[corpus]") {
  SECTION("centered squares put the heatmap peak at the center") {
    Corpus c;
    c.class_count = 2;
    c.img_size = 32;
    for (int i = 0; i < 4; ++i) {
      CorpusEntry e;
      e.id = i;
      e.class_id = i % 2;
      e.image = Image(32, 32);
      e.mask = Mask(32, 32, true);
      for (int y = 12; y < 20; ++y)
        for (int x = 12; x < 20; ++x) e.mask.at(y, x) = 1.f;
      c.entries.push_back(std::move(e));
    }
    const auto r = corpus_stats(c);
    double peak = -1;
    int peak_idx = -1;
    for (std::size_t i = 0; i < r.center_bias.size(); ++i)
      if (r.center_bias[i] > peak) {
        peak = r.center_bias[i];
        peak_idx = static_cast<int>(i);
      }
    const int py = peak_idx / 32, px = peak_idx % 32;
    REQUIRE(py >= 12);
    REQUIRE(py < 20);
    REQUIRE(px >= 12);
    REQUIRE(px < 20);
    REQUIRE(peak == 1.0);

    // heatmap sums to mean foreground fraction * H * W
    double hsum = 0;
    for (double v : r.center_bias) hsum += v;
    REQUIRE(hsum == Catch::Approx(64.0).margin(1e-9));  // fraction 64/1024 * 1024

    // all fractions identical -> single occupied size bin
    int occupied = 0;
    for (double v : r.size_hist) occupied += v > 0;
    REQUIRE(occupied == 1);
    REQUIRE(r.size_hist[static_cast<int>((64.0 / 1024.0) * 20)] == 4.0);
  }

  SECTION("identical fg/bg histograms give zero contrast") {
    Corpus c;
    c.class_count = 2;
    c.img_size = 16;
    CorpusEntry e;
    e.id = 0;
    e.class_id = 0;
    e.image = Image(16, 16);
    e.mask = Mask(16, 16, true);
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x) {
        const float v = (x + y) % 2 ? 0.9f : 0.1f;  // same checker both halves
        for (int ch = 0; ch < 3; ++ch) e.image.at(ch, y, x) = v;
        e.mask.at(y, x) = x < 8 ? 1.f : 0.f;
      }
    c.entries.push_back(std::move(e));
    const auto r = corpus_stats(c);
    REQUIRE(r.contrast[0] == Catch::Approx(0.0).margin(1e-12));
  }

  SECTION("empty corpus is rejected") {
    Corpus c;
    REQUIRE_THROWS_AS(corpus_stats(c), Error);
  }

  SECTION("stats report serializes and round-trips") {
    const Corpus c = build_corpus(3, 2, 5, 32);
    const auto r = corpus_stats(c);
    const auto j = r.to_json();
    const auto r2 = StatsReport::from_json(j);
    REQUIRE(r2.center_bias == r.center_bias);
    REQUIRE(r2.contrast == r.contrast);
    REQUIRE(r2.class_counts == r.class_counts);
  }
}

TEST_CASE("corpus persistence round-trips exactly", "[corpus]") {
  const Corpus c = build_corpus(4, 3, 11, 32);
  const auto dir = fs::temp_directory_path() / "sodgan_test_corpus";
  fs::remove_all(dir);
  save_corpus(c, dir);
  const Corpus c2 = load_corpus(dir);
  REQUIRE(c2.entries.size() == c.entries.size());
  REQUIRE(c2.class_count == c.class_count);
  for (std::size_t i = 0; i < c.entries.size(); ++i) {
    REQUIRE(c2.entries[i].image.v == c.entries[i].image.v);
    REQUIRE(c2.entries[i].mask.v == c.entries[i].mask.v);
    REQUIRE(c2.entries[i].class_id == c.entries[i].class_id);
    REQUIRE(c2.entries[i].is_test == c.entries[i].is_test);
  }

  // PNG bytes are reproducible
  const auto dir2 = fs::temp_directory_path() / "sodgan_test_corpus2";
  fs::remove_all(dir2);
  save_corpus(c, dir2);
  const auto img_a = read_text_file(dir / "images" / "000000.png");
  const auto img_b = read_text_file(dir2 / "images" / "000000.png");
  REQUIRE(img_a == img_b);
  fs::remove_all(dir);
  fs::remove_all(dir2);
}
