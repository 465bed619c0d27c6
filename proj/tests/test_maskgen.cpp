#include <catch2/catch_amalgamated.hpp>

#include "sodgan/maskgen/maskgen.hpp"
#include "sodgan/toy_corpus.hpp"

using namespace sodgan;

namespace {

Tensor<float> constant_map(int c, int h, int w, float v) {
  Tensor<float> t({c, h, w});
  t.fill(v);
  return t;
}

}  // namespace

TEST_CASE("fuse_features channel arithmetic and shapes", "[maskgen]") {
  MaskGenConfig cfg;
  cfg.level_channels = {32, 16, 8, 4};
  cfg.out_size = 16;
  cfg.reduced = 8;
  MaskGeneratorNet<float> mg(cfg, 1);
  REQUIRE(cfg.fused_channels() == 32);

  std::vector<Tensor<float>> pyr;
  Rng rng(2);
  int hw = 2;
  for (int c : cfg.level_channels) {
    Tensor<float> t({c, hw, hw});
    for (auto& v : t.v) v = static_cast<float>(rng.normal());
    pyr.push_back(std::move(t));
    hw *= 2;
  }
  typename MaskGeneratorNet<float>::Acts a;
  const auto& fused = mg.fuse_features(pyr, a);
  REQUIRE(fused.shape == std::vector<int>{32, 16, 16});

  pyr.pop_back();
  REQUIRE_THROWS_AS(mg.fuse_features(pyr, a), Error);
}

TEST_CASE("single-level identity reducer passes the level through", "[maskgen]") {
  MaskGenConfig cfg;
  cfg.level_channels = {3};
  cfg.out_size = 8;
  cfg.reduced = 3;
  MaskGeneratorNet<float> mg(cfg, 5);
  // identity 1x1 reducer
  float* w = mg.store.ptr(mg.reducers[0].ws);
  float* b = mg.store.ptr(mg.reducers[0].bs);
  for (int o = 0; o < 3; ++o) {
    b[o] = 0.f;
    for (int i = 0; i < 3; ++i) w[o * 3 + i] = o == i ? 1.f : 0.f;
  }
  Rng rng(3);
  Tensor<float> lvl({3, 8, 8});
  for (auto& v : lvl.v) v = static_cast<float>(rng.normal());
  typename MaskGeneratorNet<float>::Acts a;
  const auto& fused = mg.fuse_features({lvl}, a);
  for (std::size_t i = 0; i < lvl.size(); ++i)
    REQUIRE(fused.v[i] == Catch::Approx(lvl.v[i]).margin(1e-6));
}

TEST_CASE("omni attention on constant maps: LA equals GA with shared weights", "[maskgen]") {
  MaskGenConfig cfg;
  cfg.level_channels = {4, 4};
  cfg.out_size = 8;
  cfg.reduced = 4;
  cfg.mode = OaffMode::full;
  MaskGeneratorNet<float> mg(cfg, 7);
  const int C = cfg.fused_channels();
  const int H = cfg.la_hidden();

  // copy LA weights into GA (shapes coincide: 1x1 convs vs linear maps)
  auto copy_slot = [&](std::size_t from, std::size_t to) {
    for (std::size_t i = 0; i < mg.store.slots[from].count; ++i)
      mg.store.w[mg.store.slots[to].off + i] = mg.store.w[mg.store.slots[from].off + i];
  };
  copy_slot(mg.la_pwc1.ws, mg.ga_pwc1.ws);
  copy_slot(mg.la_pwc1.bs, mg.ga_pwc1.bs);
  copy_slot(mg.la_pwc2.ws, mg.ga_pwc2.ws);
  copy_slot(mg.la_pwc2.bs, mg.ga_pwc2.bs);

  const auto fstar = constant_map(C, 8, 8, 0.37f);
  typename MaskGeneratorNet<float>::Acts a;
  const auto& oa = mg.omni_attention(fstar, a);
  REQUIRE(oa.shape == fstar.shape);

  // LA output = OA - GA broadcast; on a constant map it must equal GA
  // pointwise and be spatially constant.
  for (int c = 0; c < C; ++c) {
    const float la0 = oa.at(c, 0, 0) - a.ga_out[c];
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) {
        const float la = oa.at(c, y, x) - a.ga_out[c];
        REQUIRE(la == Catch::Approx(la0).margin(1e-5));
        REQUIRE(la == Catch::Approx(a.ga_out[c]).margin(1e-4));
      }
  }
  (void)H;
}

TEST_CASE("zero final point-wise convs give OA == 0 and gated == 0", "[maskgen]") {
  MaskGenConfig cfg;
  cfg.level_channels = {4};
  cfg.out_size = 8;
  cfg.reduced = 4;
  cfg.mode = OaffMode::full;
  MaskGeneratorNet<float> mg(cfg, 9);
  for (auto slot : {mg.la_pwc2.ws, mg.la_pwc2.bs, mg.ga_pwc2.ws, mg.ga_pwc2.bs})
    for (std::size_t i = mg.store.slots[slot].off;
         i < mg.store.slots[slot].off + mg.store.slots[slot].count; ++i)
      mg.store.w[i] = 0.f;

  Rng rng(4);
  Tensor<float> fstar({4, 8, 8});
  for (auto& v : fstar.v) v = static_cast<float>(rng.normal());
  typename MaskGeneratorNet<float>::Acts a;
  const auto& oa = mg.omni_attention(fstar, a);
  for (float v : oa.v) REQUIRE(v == 0.f);
  const auto gated = MaskGeneratorNet<float>::apply_attention(fstar, oa);
  for (float v : gated.v) REQUIRE(v == 0.f);
}

TEST_CASE("apply_attention identities and permutation equivariance", "[maskgen]") {
  Rng rng(6);
  Tensor<float> f({3, 4, 4});
  for (auto& v : f.v) v = static_cast<float>(rng.normal());

  Tensor<float> ones = constant_map(3, 4, 4, 1.f);
  REQUIRE(MaskGeneratorNet<float>::apply_attention(f, ones).v == f.v);
  Tensor<float> zero = constant_map(3, 4, 4, 0.f);
  for (float v : MaskGeneratorNet<float>::apply_attention(f, zero).v) REQUIRE(v == 0.f);
  const auto six =
      MaskGeneratorNet<float>::apply_attention(constant_map(3, 4, 4, 2.f), constant_map(3, 4, 4, 3.f));
  for (float v : six.v) REQUIRE(v == 6.f);

  // permuting pixels of both inputs permutes the output identically
  Tensor<float> oa({3, 4, 4});
  for (auto& v : oa.v) v = static_cast<float>(rng.normal());
  std::vector<int> perm(16);
  for (int i = 0; i < 16; ++i) perm[i] = i;
  Rng prng(8);
  prng.shuffle(perm);
  auto permute = [&](const Tensor<float>& t) {
    Tensor<float> out({3, 4, 4});
    for (int c = 0; c < 3; ++c)
      for (int i = 0; i < 16; ++i) out.v[c * 16 + i] = t.v[c * 16 + perm[i]];
    return out;
  };
  const auto direct = permute(MaskGeneratorNet<float>::apply_attention(f, oa));
  const auto permuted = MaskGeneratorNet<float>::apply_attention(permute(f), permute(oa));
  REQUIRE(direct.v == permuted.v);

  Tensor<float> wrong({3, 2, 2});
  REQUIRE_THROWS_AS(MaskGeneratorNet<float>::apply_attention(f, wrong), Error);
}

TEST_CASE("head parameter counts match the closed-form table", "[maskgen]") {
  // store-based counts against the width-table formula, small input width
  for (HeadVariant v : {HeadVariant::cnn_s, HeadVariant::cnn_m, HeadVariant::cnn_l,
                        HeadVariant::mlp_s, HeadVariant::mlp_m, HeadVariant::mlp_l}) {
    MaskGenConfig cfg;
    cfg.level_channels = {2, 2};
    cfg.out_size = 8;
    cfg.reduced = 4;
    cfg.head = v;
    cfg.mode = OaffMode::none;
    MaskGeneratorNet<float> mg(cfg, 11);
    INFO(head_name(v));
    REQUIRE(mg.head_param_count() == head_param_formula(v, cfg.fused_channels()));
  }

  // the documented MLP-S case: input width 144 -> 22,754 parameters
  MaskGenConfig cfg;
  cfg.level_channels = {1, 1};
  cfg.out_size = 8;
  cfg.reduced = 72;
  cfg.head = HeadVariant::mlp_s;
  cfg.mode = OaffMode::none;
  MaskGeneratorNet<float> mg(cfg, 13);
  REQUIRE(cfg.fused_channels() == 144);
  REQUIRE(mg.head_param_count() == 22754);
  REQUIRE(head_param_formula(HeadVariant::mlp_s, 144) == 22754);
}

TEST_CASE("classify_pixels output contract and softmax normalization", "[maskgen]") {
  MaskGenConfig cfg;
  cfg.level_channels = {4};
  cfg.out_size = 8;
  cfg.reduced = 4;
  MaskGeneratorNet<float> mg(cfg, 15);
  Rng rng(16);
  Tensor<float> fprime({4, 8, 8});
  for (auto& v : fprime.v) v = static_cast<float>(rng.normal());
  typename MaskGeneratorNet<float>::Acts a;
  const auto& logits = mg.classify_pixels(fprime, a);
  REQUIRE(logits.shape == std::vector<int>{2, 8, 8});

  const auto p = nn::softmax2_forward(logits);
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double fg = p.v[i];
    const double bg =
        1.0 / (1.0 + std::exp(static_cast<double>(logits.v[64 + i]) - logits.v[i]));
    REQUIRE(fg + bg == Catch::Approx(1.0).margin(1e-6));
  }

  Tensor<float> wrong({3, 8, 8});
  REQUIRE_THROWS_AS(mg.classify_pixels(wrong, a), Error);
}

TEST_CASE("supervised loss values", "[maskgen]") {
  // perfect binary prediction: loss below 1e-5 after clamping
  Mask gt(4, 4, true);
  for (int i = 0; i < 8; ++i) gt.v[i] = 1.f;
  Tensor<float> perfect({4, 4});
  for (int i = 0; i < 16; ++i) perfect.v[i] = gt.v[i];
  REQUIRE(loss_supervised(perfect, gt) < 1e-5);

  // 2x2 case: gt has 2 foreground pixels, pred all ones -> dice term 1/3
  Mask gt2(2, 2, true);
  gt2.v = {1.f, 1.f, 0.f, 0.f};
  Tensor<float> ones({2, 2});
  ones.fill(1.f);
  double bce = 0, dice = 0;
  loss_supervised(ones, gt2, static_cast<Tensor<float>*>(nullptr), &bce, &dice);
  REQUIRE(dice == Catch::Approx(1.0 / 3.0).epsilon(1e-9));

  // non-binary ground truth is rejected
  Mask soft(2, 2, false);
  soft.v = {0.5f, 0.f, 0.f, 0.f};
  REQUIRE_THROWS_AS(loss_supervised(ones, soft), Error);
  Mask lying(2, 2, true);
  lying.v = {0.5f, 0.f, 0.f, 0.f};
  REQUIRE_THROWS_AS(loss_supervised(ones, lying), Error);
}

TEST_CASE("generator-side quality loss constants", "[maskgen]") {
  QualityConfig qcfg;
  qcfg.img_size = 8;
  qcfg.base_channels = 2;
  qcfg.max_channels = 4;
  QualityNet<float> dq(qcfg, 17);
  // zero head -> D_q == 0.5
  for (auto slot : {dq.head.ws, dq.head.bs})
    for (std::size_t i = dq.store.slots[slot].off;
         i < dq.store.slots[slot].off + dq.store.slots[slot].count; ++i)
      dq.store.w[i] = 0.f;

  Image img(8, 8);
  Tensor<float> m({8, 8});
  m.fill(0.3f);
  const double l = loss_adversarial_g<float>(dq, {{&img, &m}});
  REQUIRE(l == Catch::Approx(std::log(2.0)).epsilon(1e-6));
  REQUIRE(l == Catch::Approx(0.693147).margin(1e-5));

  // p -> 1 drives the loss to 0+ (always nonnegative)
  dq.store.w[dq.store.slots[dq.head.bs].off] = 50.f;
  const double l1 = loss_adversarial_g<float>(dq, {{&img, &m}});
  REQUIRE(l1 >= 0.0);
  REQUIRE(l1 < 1e-5);
}

TEST_CASE("few-shot mask training drives the supervised loss down", "[maskgen]") {
  const Corpus corpus = build_corpus(6, 3, 201, 16);
  GeneratorConfig gcfg;
  gcfg.img_size = 16;
  gcfg.latent_dim = 8;
  gcfg.class_count = 3;
  gcfg.emb_dim = 4;
  gcfg.base_channels = 16;
  GanTrainConfig gt;
  gt.batch = 6;
  gt.threads = 2;
  auto gan = train_generator(corpus, 4, 19, gcfg, gt);

  // few-shot pairs from raw sampled latents (the mask branch does not care
  // how the latents were produced)
  FewShotSet fs;
  for (int cls = 0; cls < 3; ++cls) {
    FewShotPair p;
    p.z = sample_latent(cls + 1, 1.0, 8);
    for (const auto& e : corpus.entries)
      if (e.class_id == cls && !e.is_test) {
        p.y = e.mask;
        p.image = e.image;
        p.source_id = e.id;
        break;
      }
    p.c = cls;
    fs.pairs.push_back(std::move(p));
  }

  QualityConfig qcfg;
  qcfg.img_size = 16;
  qcfg.base_channels = 4;
  qcfg.max_channels = 8;
  QualityNet<float> dq(qcfg, 23);

  MaskGenConfig mcfg = MaskGenConfig::for_generator(gcfg);
  mcfg.reduced = 4;
  MaskGenTrainConfig tcfg;
  tcfg.threads = 2;

  const std::uint64_t gen_before = gan.g.store.checksum();
  auto r1 = train_maskgen(fs, gan.g, &dq, 30, 29, mcfg, tcfg);
  REQUIRE(gan.g.store.checksum() == gen_before);  // generator frozen
  REQUIRE(r1.log.epochs.front().at("loss_s") > r1.log.epochs.back().at("loss_s"));
  REQUIRE(r1.net.trained);
  REQUIRE(dq.trained);

  QualityNet<float> dq2(qcfg, 23);
  auto r2 = train_maskgen(fs, gan.g, &dq2, 30, 29, mcfg, tcfg);
  REQUIRE(r1.net.store.checksum() == r2.net.store.checksum());
  REQUIRE(dq.store.checksum() == dq2.store.checksum());

  REQUIRE_THROWS_AS(train_maskgen(FewShotSet{}, gan.g, &dq, 1, 1, mcfg, tcfg), Error);

  // generate_mask contract
  const LatentCode z = sample_latent(99, 1.0, 8);
  auto [img, mask] = generate_mask(gan.g, r1.net, z, 1);
  REQUIRE(img.h == 16);
  REQUIRE(mask.h == 16);
  REQUIRE_FALSE(mask.binary);
  for (float v : mask.v) {
    REQUIRE(v >= 0.f);
    REQUIRE(v <= 1.f);
  }
  auto [img2, mask2] = generate_mask(gan.g, r1.net, z, 1);
  REQUIRE(img.v == img2.v);
  REQUIRE(mask.v == mask2.v);

  // checkpoint round-trip
  const auto dir = fs::temp_directory_path() / "sodgan_test_mg";
  fs::create_directories(dir);
  save_maskgen(dir / "mg", r1.net, 29);
  const auto loaded = load_maskgen(dir / "mg");
  REQUIRE(loaded.store.checksum() == r1.net.store.checksum());
  fs::remove_all(dir);
}
