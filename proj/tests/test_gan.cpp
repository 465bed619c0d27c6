#include <catch2/catch_amalgamated.hpp>

#include <algorithm>

#include "sodgan/gan/generator.hpp"
#include "sodgan/toy_corpus.hpp"

using namespace sodgan;

TEST_CASE("sample_latent truncation bound and determinism", "[gan]") {
  const auto z = sample_latent(5, 0.4, 64);
  REQUIRE(static_cast<int>(z.v.size()) == 64);
  REQUIRE_FALSE(z.embedded);
  for (float v : z.v) REQUIRE(std::fabs(v) <= 0.4f);
  const auto z2 = sample_latent(5, 0.4, 64);
  REQUIRE(z.v == z2.v);
  REQUIRE_THROWS_AS(sample_latent(5, 0.0, 64), Error);
}

TEST_CASE("latent variance is monotone non-decreasing in lambda", "[gan]") {
  const int dim = 16, draws = 6500;  // ~1e5 coordinates per lambda
  double prev = -1;
  for (double lambda : {0.2, 0.4, 0.6, 0.8, 1.0}) {
    double sumsq = 0;
    long long n = 0;
    for (int s = 0; s < draws; ++s) {
      const auto z = sample_latent(1000 + s, lambda, dim);
      for (float v : z.v) {
        sumsq += static_cast<double>(v) * v;
        ++n;
      }
    }
    const double var = sumsq / n;
    REQUIRE(var >= prev);
    prev = var;
  }
}

TEST_CASE("huge lambda is indistinguishable from an untruncated sampler", "[gan]") {
  // two-sample Kolmogorov-Smirnov at alpha = 0.01
  const int n = 10000;
  std::vector<double> a, b;
  for (int s = 0; s < n / 64; ++s) {
    const auto z = sample_latent(s, 1e6, 64);
    for (float v : z.v) a.push_back(v);
  }
  Rng rng(777);
  for (std::size_t i = 0; i < a.size(); ++i) b.push_back(rng.normal());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double d = 0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] <= b[j])
      ++i;
    else
      ++j;
    d = std::max(d, std::fabs(static_cast<double>(i) / a.size() -
                              static_cast<double>(j) / b.size()));
  }
  const double crit =
      1.628 * std::sqrt(static_cast<double>(a.size() + b.size()) /
                        (static_cast<double>(a.size()) * static_cast<double>(b.size())));
  INFO("KS statistic " << d << " vs critical " << crit);
  REQUIRE(d < crit);
}

TEST_CASE("generate: pyramid ladder contract", "[gan]") {
  GeneratorConfig cfg;
  cfg.img_size = 64;
  cfg.latent_dim = 16;
  cfg.class_count = 4;
  cfg.base_channels = 64;
  Generator<float> g(cfg, 42);
  REQUIRE(cfg.blocks() == 4);

  LatentCode z = sample_latent(3, 1.0, 16);
  auto [img, pyr] = generate(g, z, 2);
  REQUIRE(static_cast<int>(pyr.levels.size()) == 4);
  int expect_hw = 8, expect_ch = 32;
  for (int i = 0; i < 4; ++i) {
    REQUIRE(pyr.levels[i].shape[0] == expect_ch);
    REQUIRE(pyr.levels[i].shape[1] == expect_hw);
    REQUIRE(pyr.levels[i].shape[2] == expect_hw);
    expect_hw *= 2;
    expect_ch /= 2;
  }
  REQUIRE(pyr.levels.back().shape[1] == 64);
  REQUIRE(img.h == 64);
  for (float v : img.v) {
    REQUIRE(v >= 0.f);
    REQUIRE(v <= 1.f);
  }

  auto [img2, pyr2] = generate(g, z, 2);
  REQUIRE(img.v == img2.v);
  for (int i = 0; i < 4; ++i) REQUIRE(pyr.levels[i].v == pyr2.levels[i].v);

  LatentCode bad;
  bad.v.assign(8, 0.f);
  REQUIRE_THROWS_AS(generate(g, bad, 2), Error);
  REQUIRE_THROWS_AS(generate(g, z, 9), Error);
}

TEST_CASE("train_generator preconditions and log shape", "[gan]") {
  const Corpus corpus = build_corpus(4, 3, 21, 16);
  GeneratorConfig cfg;
  cfg.img_size = 16;
  cfg.latent_dim = 8;
  cfg.class_count = 3;
  cfg.emb_dim = 4;
  cfg.base_channels = 16;
  GanTrainConfig tcfg;
  tcfg.batch = 6;
  tcfg.threads = 2;

  REQUIRE_THROWS_AS(train_generator(corpus, 0, 1, cfg, tcfg), Error);
  REQUIRE_THROWS_AS(train_generator(Corpus{}, 1, 1, cfg, tcfg), Error);

  const auto r = train_generator(corpus, 3, 5, cfg, tcfg);
  REQUIRE(r.log.epochs.size() == 3);
  for (const auto& e : r.log.epochs) {
    REQUIRE(e.count("d_real") == 1);
    REQUIRE(e.count("d_fake") == 1);
    REQUIRE(e.count("g_loss") == 1);
  }
  REQUIRE(r.g.trained);
  REQUIRE(r.d.trained);
}

TEST_CASE("discriminate_real bounds and zero-logit midpoint", "[gan]") {
  DiscConfig cfg;
  cfg.img_size = 16;
  cfg.class_count = 3;
  cfg.emb_dim = 4;
  cfg.base_channels = 4;
  cfg.max_channels = 8;
  ReconDiscriminator<float> d(cfg, 9);

  Image x(16, 16);
  Rng rng(12);
  for (auto& v : x.v) v = static_cast<float>(rng.uniform());

  const double p = discriminate_real(d, x, 1);
  REQUIRE(p > 0.0);
  REQUIRE(p < 1.0);

  // zero the head and projection -> logit 0 -> probability exactly 0.5
  for (auto slot : {d.head.ws, d.head.bs, d.proj.ws, d.proj.bs})
    for (std::size_t i = d.store.slots[slot].off;
         i < d.store.slots[slot].off + d.store.slots[slot].count; ++i)
      d.store.w[i] = 0.f;
  REQUIRE(discriminate_real(d, x, 1) == 0.5);
}

TEST_CASE("trained discriminator separates real from noise", "[gan]") {
  const Corpus corpus = build_corpus(12, 3, 31, 16);
  GeneratorConfig cfg;
  cfg.img_size = 16;
  cfg.latent_dim = 8;
  cfg.class_count = 3;
  cfg.emb_dim = 4;
  cfg.base_channels = 16;
  GanTrainConfig tcfg;
  tcfg.batch = 8;
  tcfg.threads = 2;
  const auto r = train_generator(corpus, 30, 7, cfg, tcfg);

  Rng rng(55);
  double real_avg = 0, noise_avg = 0;
  int n = 0;
  for (const auto& e : corpus.entries) {
    if (!e.is_test && n >= 12) break;
    real_avg += discriminate_real(r.d, e.image, e.class_id);
    Image noise(16, 16);
    for (auto& v : noise.v) v = static_cast<float>(rng.uniform());
    noise_avg += discriminate_real(r.d, noise, e.class_id);
    ++n;
  }
  INFO("real " << real_avg / n << " noise " << noise_avg / n);
  REQUIRE(real_avg / n > noise_avg / n);
}

TEST_CASE("generator training log separates real from fake scores", "[gan]") {
  const Corpus corpus = build_corpus(24, 2, 41, 16);
  GeneratorConfig cfg;
  cfg.img_size = 16;
  cfg.latent_dim = 8;
  cfg.class_count = 2;
  cfg.emb_dim = 4;
  cfg.base_channels = 16;
  GanTrainConfig tcfg;
  tcfg.batch = 6;
  tcfg.lr_d = 4e-4;
  tcfg.threads = 2;
  const auto r = train_generator(corpus, 10, 11, cfg, tcfg);
  for (std::size_t e = 1; e < r.log.epochs.size(); ++e) {
    INFO("epoch " << e);
    REQUIRE(r.log.epochs[e].at("d_real") > r.log.epochs[e].at("d_fake"));
  }
}
