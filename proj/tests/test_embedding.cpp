#include <catch2/catch_amalgamated.hpp>

#include "sodgan/den/embedding.hpp"
#include "sodgan/toy_corpus.hpp"

using namespace sodgan;

namespace {

struct MicroStack {
  Corpus corpus;
  GanTrainResult gan;
};

MicroStack micro_stack(int n_per_class = 6, int classes = 3, int gan_epochs = 4) {
  MicroStack s{build_corpus(n_per_class, classes, 101, 16), {}};
  GeneratorConfig cfg;
  cfg.img_size = 16;
  cfg.latent_dim = 8;
  cfg.class_count = classes;
  cfg.emb_dim = 4;
  cfg.base_channels = 16;
  GanTrainConfig tcfg;
  tcfg.batch = 6;
  tcfg.threads = 2;
  s.gan = train_generator(s.corpus, gan_epochs, 13, cfg, tcfg);
  return s;
}

}  // namespace

TEST_CASE("adversarial reconstruction loss constants", "[embedding]") {
  auto s = micro_stack(4, 2, 1);
  EmbedConfig ecfg;
  ecfg.img_size = 16;
  ecfg.latent_dim = 8;
  ecfg.class_count = 2;
  ecfg.emb_dim = 4;
  ecfg.base_channels = 4;
  ecfg.max_channels = 8;
  EmbeddingNet<float> den(ecfg, 3);

  // force D_r == 0.5 everywhere
  for (auto slot : {s.gan.d.head.ws, s.gan.d.head.bs, s.gan.d.proj.ws, s.gan.d.proj.bs})
    for (std::size_t i = s.gan.d.store.slots[slot].off;
         i < s.gan.d.store.slots[slot].off + s.gan.d.store.slots[slot].count; ++i)
      s.gan.d.store.w[i] = 0.f;

  std::vector<std::pair<const Image*, ClassLabel>> batch;
  for (int i = 0; i < 3; ++i)
    batch.emplace_back(&s.corpus.entries[i].image, s.corpus.entries[i].class_id);
  const auto [dr_loss, den_loss] = loss_adversarial_recon(den, s.gan.g, s.gan.d, batch);
  REQUIRE(dr_loss == Catch::Approx(2.0 * std::log(2.0)).epsilon(1e-6));
  REQUIRE(dr_loss == Catch::Approx(1.386294).margin(1e-5));
  REQUIRE(den_loss == Catch::Approx(std::log(2.0)).epsilon(1e-6));
  REQUIRE(den_loss >= 0.0);

  Generator<float> untrained(s.gan.g.cfg, 1);
  REQUIRE_THROWS_AS(loss_adversarial_recon(den, untrained, s.gan.d, batch), Error);
}

TEST_CASE("train_den improves held-out reconstruction and is deterministic", "[embedding]") {
  auto s = micro_stack(6, 3, 5);
  const auto sched = make_schedule(10, 1e-4, 0.02);
  DenTrainConfig cfg;
  cfg.warmup_steps = 60;
  cfg.batch = 6;
  cfg.threads = 2;
  cfg.eval_cap = 8;

  auto dr_copy = s.gan.d;
  const auto r1 = train_den(s.corpus, s.gan.g, dr_copy, sched, 3, 77, cfg);
  REQUIRE(static_cast<int>(r1.den.cfg.latent_dim) == s.gan.g.cfg.latent_dim);
  REQUIRE(r1.log.epochs.size() == 4);  // initial snapshot + 3 epochs
  const double initial = r1.log.epochs.front().at("recon_l1");
  const double final_ = r1.log.epochs.back().at("recon_l1");
  INFO("recon l1 initial " << initial << " final " << final_);
  REQUIRE(final_ < initial);

  auto dr_copy2 = s.gan.d;
  const auto r2 = train_den(s.corpus, s.gan.g, dr_copy2, sched, 3, 77, cfg);
  REQUIRE(r1.den.store.checksum() == r2.den.store.checksum());
  REQUIRE(dr_copy.store.checksum() == dr_copy2.store.checksum());

  REQUIRE_THROWS_AS(train_den(Corpus{}, s.gan.g, dr_copy, sched, 1, 1, cfg), Error);
  REQUIRE_THROWS_AS(train_den(s.corpus, s.gan.g, dr_copy, sched, 0, 1, cfg), Error);
}

TEST_CASE("few-shot set construction", "[embedding]") {
  auto s = micro_stack(6, 3, 1);
  const auto sched = make_schedule(6, 1e-4, 0.02);
  DenTrainConfig cfg;
  cfg.warmup_steps = 10;
  cfg.batch = 4;
  cfg.threads = 2;
  cfg.eval_cap = 4;
  auto dr = s.gan.d;
  const auto den = train_den(s.corpus, s.gan.g, dr, sched, 1, 5, cfg).den;

  const auto fs1 = build_fewshot_set(s.corpus, den, 9);
  REQUIRE(fs1.pairs.size() == 3);
  std::set<int> classes;
  for (const auto& p : fs1.pairs) classes.insert(p.c);
  REQUIRE(classes.size() == 3);

  const auto fs2 = build_fewshot_set(s.corpus, den, 9);
  for (std::size_t i = 0; i < fs1.pairs.size(); ++i) {
    REQUIRE(fs1.pairs[i].source_id == fs2.pairs[i].source_id);
    REQUIRE(fs1.pairs[i].z.v == fs2.pairs[i].z.v);
  }

  // stored latent equals a fresh encoder pass over the source image
  for (const auto& p : fs1.pairs) {
    const auto* entry = &s.corpus.entries[p.source_id];
    typename EmbeddingNet<float>::Acts ea;
    const auto z = den.embed(entry->image.tensor(), p.c, ea);
    REQUIRE(z == p.z.v);
    REQUIRE(p.z.embedded);
    REQUIRE_FALSE(entry->is_test);
  }

  // class without entries -> missing-class error
  Corpus broken = s.corpus;
  broken.class_count = 4;
  REQUIRE_THROWS_AS(build_fewshot_set(broken, den, 1), Error);
  try {
    build_fewshot_set(broken, den, 1);
  } catch (const Error& e) {
    REQUIRE(e.kind() == ErrKind::missing_class);
  }

  // persistence round-trip
  const auto dir = fs::temp_directory_path() / "sodgan_test_fewshot";
  fs::remove_all(dir);
  save_corpus(s.corpus, dir / "corpus");
  save_fewshot(fs1, dir / "fewshot.jsonl", dir / "corpus");
  const auto fs3 = load_fewshot(dir / "fewshot.jsonl");
  REQUIRE(fs3.pairs.size() == fs1.pairs.size());
  for (std::size_t i = 0; i < fs1.pairs.size(); ++i) {
    REQUIRE(fs3.pairs[i].z.v == fs1.pairs[i].z.v);
    REQUIRE(fs3.pairs[i].y.v == fs1.pairs[i].y.v);
    REQUIRE(fs3.pairs[i].image.v == fs1.pairs[i].image.v);
  }
  fs::remove_all(dir);
}

TEST_CASE("vae baseline trains and reports reconstruction", "[embedding]") {
  auto s = micro_stack(4, 2, 2);
  DenTrainConfig cfg;
  cfg.batch = 4;
  cfg.threads = 2;
  cfg.eval_cap = 4;
  const auto r = train_vae_baseline(s.corpus, s.gan.g, 2, 3, cfg);
  REQUIRE(r.den.cfg.vae);
  REQUIRE(r.den.trained);
  REQUIRE(r.log.epochs.size() == 3);
  // embed() returns the mean head and matches the latent dimension
  typename EmbeddingNet<float>::Acts ea;
  const auto z = r.den.embed(s.corpus.entries[0].image.tensor(), 0, ea);
  REQUIRE(static_cast<int>(z.size()) == s.gan.g.cfg.latent_dim);
}
