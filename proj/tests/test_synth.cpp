#include <catch2/catch_amalgamated.hpp>

#include "sodgan/synth/pipeline.hpp"
#include "sodgan/toy_corpus.hpp"

using namespace sodgan;

namespace {

struct SynthStack {
  Generator<float> g;
  MaskGeneratorNet<float> mg;
  QualityNet<float> dq;
};

// Freshly initialized nets are enough for pipeline-contract tests; the
// trained flags are set the way the real pipeline would.
SynthStack synth_stack(std::uint64_t seed = 1) {
  GeneratorConfig gcfg;
  gcfg.img_size = 16;
  gcfg.latent_dim = 8;
  gcfg.class_count = 3;
  gcfg.emb_dim = 4;
  gcfg.base_channels = 16;
  MaskGenConfig mcfg = MaskGenConfig::for_generator(gcfg);
  mcfg.reduced = 4;
  QualityConfig qcfg;
  qcfg.img_size = 16;
  qcfg.base_channels = 4;
  qcfg.max_channels = 8;
  SynthStack s{Generator<float>(gcfg, seed), MaskGeneratorNet<float>(mcfg, seed + 1),
               QualityNet<float>(qcfg, seed + 2)};
  s.g.trained = true;
  s.mg.trained = true;
  s.dq.trained = true;
  return s;
}

std::string strip_created_at(const std::string& header_json) {
  auto j = nlohmann::json::parse(header_json);
  j.erase("created_at");
  return j.dump();
}

}  // namespace

TEST_CASE("vacuous threshold keeps every attempt", "[synth]") {
  auto s = synth_stack();
  const auto dir = fs::temp_directory_path() / "sodgan_synth_all";
  fs::remove_all(dir);
  const auto ds = synthesize_dataset(s.g, s.mg, s.dq, 12, 1.0, FilterPolicy::threshold(0.0),
                                     {0, 1, 2}, 5, dir, 2);
  REQUIRE(ds.size() == 12);
  REQUIRE(ds.manifest.records.size() == 12);  // kept count == attempt count
  for (const auto& rec : ds.manifest.records) {
    REQUIRE(rec.kept);
    REQUIRE(rec.quality_score > 0.0);
    REQUIRE(rec.quality_score < 1.0);
    REQUIRE(std::fabs(rec.quality_score * 1e6 - std::llround(rec.quality_score * 1e6)) < 1e-9);
    REQUIRE(fs::exists(dir / rec.image_path));
    REQUIRE(fs::exists(dir / rec.mask_path));
  }
  // classes drawn round-robin
  for (std::size_t i = 0; i < ds.manifest.records.size(); ++i)
    REQUIRE(ds.manifest.records[i].class_id == static_cast<int>(i % 3));
  fs::remove_all(dir);
}

TEST_CASE("synthesis is bit-reproducible and worker-count independent", "[synth]") {
  auto s = synth_stack();
  const auto d1 = fs::temp_directory_path() / "sodgan_synth_a";
  const auto d2 = fs::temp_directory_path() / "sodgan_synth_b";
  const auto d3 = fs::temp_directory_path() / "sodgan_synth_c";
  fs::remove_all(d1);
  fs::remove_all(d2);
  fs::remove_all(d3);
  synthesize_dataset(s.g, s.mg, s.dq, 10, 0.8, FilterPolicy::threshold(0.4), {0, 1, 2}, 9, d1, 1);
  synthesize_dataset(s.g, s.mg, s.dq, 10, 0.8, FilterPolicy::threshold(0.4), {0, 1, 2}, 9, d2, 1);
  synthesize_dataset(s.g, s.mg, s.dq, 10, 0.8, FilterPolicy::threshold(0.4), {0, 1, 2}, 9, d3, 4);

  REQUIRE(read_text_file(d1 / "manifest.jsonl") == read_text_file(d2 / "manifest.jsonl"));
  REQUIRE(read_text_file(d1 / "manifest.jsonl") == read_text_file(d3 / "manifest.jsonl"));
  REQUIRE(strip_created_at(read_text_file(d1 / "header.json")) ==
          strip_created_at(read_text_file(d2 / "header.json")));
  REQUIRE(strip_created_at(read_text_file(d1 / "header.json")) ==
          strip_created_at(read_text_file(d3 / "header.json")));

  const auto ds1 = read_dataset(d1);
  for (std::size_t i = 0; i < ds1.size(); ++i) {
    const auto& rec = ds1.manifest.records[ds1.kept_indices[i]];
    REQUIRE(read_text_file(d1 / rec.image_path) == read_text_file(d3 / rec.image_path));
    REQUIRE(read_text_file(d1 / rec.mask_path) == read_text_file(d3 / rec.mask_path));
  }
  fs::remove_all(d1);
  fs::remove_all(d2);
  fs::remove_all(d3);
}

TEST_CASE("strict filters fail loudly with the acceptance rate", "[synth]") {
  auto s = synth_stack();
  // drive every score to ~0
  s.dq.store.w[s.dq.store.slots[s.dq.head.bs].off] = -30.f;
  const auto dir = fs::temp_directory_path() / "sodgan_synth_strict";
  fs::remove_all(dir);
  bool threw = false;
  try {
    synthesize_dataset(s.g, s.mg, s.dq, 5, 1.0, FilterPolicy::threshold(0.5), {0, 1, 2}, 3, dir, 2);
  } catch (const SynthesisError& e) {
    threw = true;
    REQUIRE(e.kind() == ErrKind::filter_too_strict);
    REQUIRE(e.acceptance_rate >= 0.0);
    REQUIRE(e.acceptance_rate < 1.0);
    REQUIRE(std::string(e.what()).find("acceptance rate") != std::string::npos);
  }
  REQUIRE(threw);
  fs::remove_all(dir);
}

TEST_CASE("read_dataset validates files and round-trips rasters", "[synth]") {
  auto s = synth_stack(21);
  const auto dir = fs::temp_directory_path() / "sodgan_synth_rt";
  fs::remove_all(dir);
  const auto ds =
      synthesize_dataset(s.g, s.mg, s.dq, 6, 1.0, FilterPolicy::threshold(0.0), {0, 1}, 31, dir, 1);

  const auto loaded = read_dataset(dir);
  REQUIRE(loaded.size() == ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    // regenerate from the recorded latent seed and compare pixels
    const auto& rec = loaded.manifest.records[loaded.kept_indices[i]];
    const LatentCode z = sample_latent(rec.latent_seed, rec.lambda, s.g.cfg.latent_dim);
    auto [img, prob] = generate_mask(s.g, s.mg, z, rec.class_id);
    const Mask bin = prob.binarize(0.5f);
    auto [limg, lmask] = loaded.load_pair(i);
    REQUIRE(lmask.v == bin.v);
    for (std::size_t j = 0; j < img.v.size(); ++j)
      REQUIRE(std::fabs(limg.v[j] - img.v[j]) <= 0.5f / 255.f + 1e-6f);
  }

  // deleting a kept mask file corrupts the dataset
  fs::remove(dir / loaded.manifest.records[loaded.kept_indices[0]].mask_path);
  REQUIRE_THROWS_AS(read_dataset(dir), Error);
  try {
    read_dataset(dir);
  } catch (const Error& e) {
    REQUIRE(e.kind() == ErrKind::corrupt_dataset);
  }
  fs::remove_all(dir);
}

TEST_CASE("an empty kept set is a valid dataset of length zero", "[synth]") {
  const auto dir = fs::temp_directory_path() / "sodgan_synth_empty";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string jsonl =
      nlohmann::json{{"id", 0},       {"class", 0},          {"latent_seed", 1},
                     {"lambda", 1.0}, {"quality_score", 0.25}, {"kept", false}}
          .dump() +
      "\n";
  write_text_file(dir / "manifest.jsonl", jsonl);
  nlohmann::json hj{{"generator_checksum", "0"}, {"maskgen_checksum", "0"},
                    {"dq_checksum", "0"},        {"policy", "threshold tau=0.900000"},
                    {"created_at", "x"},         {"lambda", 1.0},
                    {"seed", 1},                 {"n_keep", 0},
                    {"attempts", 1},             {"acceptance_rate", 0.0},
                    {"class_set", {0}},          {"image_size", 16},
                    {"manifest_checksum", hex64(fnv1a(jsonl))}};
  write_text_file(dir / "header.json", hj.dump(1) + "\n");
  const auto ds = read_dataset(dir);
  REQUIRE(ds.size() == 0);
  REQUIRE_THROWS_AS(dataset_stats(ds), Error);
  fs::remove_all(dir);
}

TEST_CASE("top-fraction synthesis keeps exactly n_keep", "[synth]") {
  auto s = synth_stack(31);
  const auto dir = fs::temp_directory_path() / "sodgan_synth_topf";
  fs::remove_all(dir);
  const auto ds = synthesize_dataset(s.g, s.mg, s.dq, 8, 1.0, FilterPolicy::top_fraction(0.5),
                                     {0, 1, 2}, 41, dir, 2);
  REQUIRE(ds.size() == 8);
  REQUIRE(ds.manifest.records.size() == 16);
  fs::remove_all(dir);
}

TEST_CASE("dataset statistics mirror the corpus statistics contract", "[synth]") {
  auto s = synth_stack(41);
  const auto dir = fs::temp_directory_path() / "sodgan_synth_stats";
  fs::remove_all(dir);
  const auto ds =
      synthesize_dataset(s.g, s.mg, s.dq, 9, 1.0, FilterPolicy::threshold(0.0), {0, 1, 2}, 51, dir, 2);
  const auto r = dataset_stats(ds);
  int total = 0;
  for (const auto& [cls, n] : r.class_counts) total += n;
  REQUIRE(total == static_cast<int>(ds.size()));
  REQUIRE(r.center_bias.size() == 16u * 16u);
  for (double v : r.center_bias) {
    REQUIRE(v >= 0.0);
    REQUIRE(v <= 1.0);
  }
  const auto j = r.to_json();
  const auto r2 = StatsReport::from_json(j);
  REQUIRE(r2.center_bias == r.center_bias);
  fs::remove_all(dir);
}
