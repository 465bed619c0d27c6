#include <catch2/catch_amalgamated.hpp>

#include "sodgan/eval/report.hpp"
#include "sodgan/eval/saliency.hpp"
#include "sodgan/toy_corpus.hpp"

using namespace sodgan;

TEST_CASE("overfitting ten copies of one pair drives the loss down", "[saliency]") {
  auto [img, mask] = generate_scene(3, 1, 16);
  std::vector<std::pair<const Image*, const Mask*>> data;
  for (int i = 0; i < 10; ++i) data.emplace_back(&img, &mask);

  SaliencyTrainConfig cfg;
  cfg.batch = 10;
  cfg.threads = 2;
  cfg.base = 8;
  const auto r = train_saliency(data, 200, 7, cfg);
  const double final_loss = r.log.epochs.back().at("loss_s");
  INFO("final loss " << final_loss);
  REQUIRE(final_loss < 0.05);
  REQUIRE(r.log.epochs.front().at("loss_s") > final_loss);

  const Mask pred = predict_saliency(r.net, img);
  REQUIRE(pred.h == img.h);
  REQUIRE(pred.w == img.w);
  for (float v : pred.v) {
    REQUIRE(v >= 0.f);
    REQUIRE(v <= 1.f);
  }
}

TEST_CASE("saliency training is deterministic under the seed", "[saliency]") {
  const Corpus corpus = build_corpus(4, 2, 501, 16);
  std::vector<std::pair<const Image*, const Mask*>> data;
  for (const auto& e : corpus.entries)
    if (!e.is_test) data.emplace_back(&e.image, &e.mask);
  SaliencyTrainConfig cfg;
  cfg.batch = 4;
  cfg.threads = 2;
  cfg.base = 8;
  const auto a = train_saliency(data, 2, 11, cfg);
  const auto b = train_saliency(data, 2, 11, cfg);
  REQUIRE(a.net.store.checksum() == b.net.store.checksum());

  REQUIRE_THROWS_AS(train_saliency({}, 1, 1, cfg), Error);
  REQUIRE_THROWS_AS(train_saliency(data, 0, 1, cfg), Error);

  // checkpoint round-trip
  const auto dir = fs::temp_directory_path() / "sodgan_test_sod";
  fs::create_directories(dir);
  save_saliency(dir / "sod", a.net, 11);
  const auto loaded = load_saliency(dir / "sod");
  REQUIRE(loaded.store.checksum() == a.net.store.checksum());
  fs::remove_all(dir);
}

TEST_CASE("metric battery on perfect predictions", "[report]") {
  const Corpus corpus = build_corpus(3, 2, 601, 16);
  std::vector<Mask> preds;
  std::vector<const Mask*> pp, gg;
  for (const auto& e : corpus.entries) {
    Mask p(e.mask.h, e.mask.w, false);
    p.v = e.mask.v;
    preds.push_back(std::move(p));
  }
  for (std::size_t i = 0; i < preds.size(); ++i) {
    pp.push_back(&preds[i]);
    gg.push_back(&corpus.entries[i].mask);
  }
  const auto r = evaluate_battery(pp, gg);
  REQUIRE(r.mae == 0.0);
  REQUIRE(r.max_f == 1.0);
  REQUIRE(r.auc == Catch::Approx(1.0).margin(1e-12));
  REQUIRE(r.s_measure == Catch::Approx(1.0).margin(1e-9));
  REQUIRE(r.max_f >= r.mean_f);
  REQUIRE(*std::max_element(r.f_curve.begin(), r.f_curve.end()) == r.max_f);
}

TEST_CASE("emit_plots writes deterministic 256-row CSVs", "[report]") {
  const Corpus corpus = build_corpus(3, 2, 701, 16);
  std::vector<Mask> preds;
  Rng rng(5);
  for (const auto& e : corpus.entries) {
    Mask p(e.mask.h, e.mask.w, false);
    for (std::size_t i = 0; i < p.v.size(); ++i)
      p.v[i] = std::clamp(e.mask.v[i] * 0.7f + 0.15f * static_cast<float>(rng.uniform()), 0.f, 1.f);
    preds.push_back(std::move(p));
  }
  std::vector<const Mask*> pp, gg;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    pp.push_back(&preds[i]);
    gg.push_back(&corpus.entries[i].mask);
  }
  const auto r = evaluate_battery(pp, gg);

  const auto dir = fs::temp_directory_path() / "sodgan_test_plots";
  fs::remove_all(dir);
  emit_plots(r, dir);
  REQUIRE(fs::exists(dir / "pr_curve.png"));
  REQUIRE(fs::exists(dir / "f_curve.png"));

  auto count_rows = [](const std::string& text) {
    std::size_t rows = 0;
    for (char c : text) rows += c == '\n';
    return rows;
  };
  const auto f_csv = read_text_file(dir / "f_curve.csv");
  const auto pr_csv = read_text_file(dir / "pr_curve.csv");
  REQUIRE(count_rows(f_csv) == 256);
  REQUIRE(count_rows(pr_csv) == 256);

  // the f-curve CSV maximum equals the reported max_f (6-decimal grid)
  double best = 0;
  std::istringstream in(f_csv);
  std::string line;
  while (std::getline(in, line)) {
    const auto comma = line.find(',');
    best = std::max(best, std::stod(line.substr(comma + 1)));
  }
  REQUIRE(best == Catch::Approx(r.max_f).margin(5e-7));

  // re-emission is byte-identical
  emit_plots(r, dir);
  REQUIRE(read_text_file(dir / "f_curve.csv") == f_csv);
  REQUIRE(read_text_file(dir / "pr_curve.csv") == pr_csv);

  // report JSON round-trips
  const auto j = r.to_json();
  const auto r2 = MetricReport::from_json(j);
  REQUIRE(r2.mae == Catch::Approx(r.mae).margin(5e-7));
  REQUIRE(r2.pr_curve.size() == 256);
  fs::remove_all(dir);
}
