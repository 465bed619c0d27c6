#pragma once

// Stage orchestration behind the CLI: every subcommand resolves its config,
// verifies its upstream artifacts before writing anything, runs, and records
// the fully resolved configuration under runs/<subcommand>.json.
//
// Artifact layout under $SODGAN_HOME (default "."):
//   corpus/               images, masks, corpus.jsonl
//   models/               checkpoints (<name>.bin + <name>.json), logs
//   synth/                synthetic dataset (images, masks, manifest, header)
//   eval/                 report.json + curve CSV/PNG
//   runs/                 resolved per-subcommand configs

#include "sodgan/config.hpp"
#include "sodgan/eval/pathway.hpp"
#include "sodgan/synth/pipeline.hpp"
#include "sodgan/toy_corpus.hpp"

namespace sodgan::cli {

struct Context {
  json cfg;
  fs::path home;
  int threads = 1;

  fs::path path(const std::string& rel) const { return home / rel; }
  fs::path cfg_path(const std::string& section, const std::string& key) const {
    return home / cfg.at(section).at(key).get<std::string>();
  }
};

inline Context make_context(const json& user_cfg, const std::vector<std::string>& overrides) {
  Context ctx;
  ctx.cfg = resolve_config(user_cfg);
  for (const auto& o : overrides) apply_override(ctx.cfg, o);
  ctx.home = config_home(ctx.cfg);
  const int t = ctx.cfg.at("threads").get<int>();
  ctx.threads = t > 0 ? t : default_threads();
  return ctx;
}

inline void write_run_record(const Context& ctx, const std::string& subcommand) {
  fs::create_directories(ctx.home / "runs");
  json j{{"subcommand", subcommand},
         {"config", ctx.cfg},
         {"created_at", detail::now_iso8601()}};
  write_text_file(ctx.home / "runs" / (subcommand + ".json"), j.dump(1) + "\n");
}

// --- dependency helpers -----------------------------------------------------

inline Corpus need_corpus(const Context& ctx) {
  const auto dir = ctx.cfg_path("corpus", "dir");
  require(fs::exists(dir / "corpus.jsonl"), ErrKind::dependency,
          "missing corpus (run `corpus` first): " + dir.string());
  return load_corpus(dir);
}

inline Generator<float> need_generator(const Context& ctx) {
  return load_generator(ctx.cfg_path("gan", "ckpt"));
}

inline ReconDiscriminator<float> need_discriminator(const Context& ctx) {
  return load_discriminator(fs::path(ctx.cfg_path("gan", "ckpt").string() + "_d"));
}

inline EmbeddingNet<float> need_embedding(const Context& ctx) {
  return load_embedding(ctx.cfg_path("den", "ckpt"));
}

inline MaskGeneratorNet<float> need_maskgen(const Context& ctx) {
  return load_maskgen(ctx.cfg_path("maskgen", "ckpt"));
}

inline QualityNet<float> need_dq(const Context& ctx) {
  return load_quality(ctx.cfg_path("maskgen", "dq_ckpt"));
}

inline FewShotSet need_fewshot(const Context& ctx) {
  return load_fewshot(ctx.cfg_path("den", "fewshot"));
}

inline FilterPolicy policy_from(const json& cfg) {
  const auto& p = cfg.at("policy");
  const std::string mode = p.at("mode").get<std::string>();
  if (mode == "threshold") return FilterPolicy::threshold(p.at("tau").get<double>());
  if (mode == "top-fraction") return FilterPolicy::top_fraction(p.at("rho").get<double>());
  fail(ErrKind::config, "config: unknown policy mode '" + mode + "'");
}

inline DiffusionSchedule schedule_from(const json& cfg) {
  const auto& s = cfg.at("schedule");
  return make_schedule(s.at("T").get<int>(), s.at("beta_start").get<double>(),
                       s.at("beta_end").get<double>());
}

// --- stages -------------------------------------------------------------

inline void cmd_corpus(const Context& ctx) {
  const auto& c = ctx.cfg;
  const Corpus corpus =
      build_corpus(c.at("corpus").at("n_per_class").get<int>(), c.at("class_count").get<int>(),
                   c.at("corpus").at("seed").get<std::uint64_t>(), c.at("image_size").get<int>(),
                   ctx.threads);
  save_corpus(corpus, ctx.cfg_path("corpus", "dir"));
  write_run_record(ctx, "corpus");
}

inline GanTrainConfig gan_train_config(const Context& ctx) {
  const auto& g = ctx.cfg.at("gan");
  GanTrainConfig t;
  t.batch = g.at("batch").get<int>();
  t.lr_g = g.at("lr_g").get<double>();
  t.lr_d = g.at("lr_d").get<double>();
  t.beta1 = g.at("adam_beta1").get<double>();
  t.beta2 = g.at("adam_beta2").get<double>();
  t.threads = ctx.threads;
  return t;
}

inline GeneratorConfig generator_config(const Context& ctx) {
  GeneratorConfig gc;
  gc.img_size = ctx.cfg.at("image_size").get<int>();
  gc.latent_dim = ctx.cfg.at("latent_dim").get<int>();
  gc.class_count = ctx.cfg.at("class_count").get<int>();
  gc.emb_dim = ctx.cfg.at("gan").at("emb_dim").get<int>();
  gc.base_channels = ctx.cfg.at("gan").at("base_channels").get<int>();
  return gc;
}

inline void cmd_train_gan(const Context& ctx) {
  const Corpus corpus = need_corpus(ctx);
  const auto& g = ctx.cfg.at("gan");
  const auto seed = g.at("seed").get<std::uint64_t>();
  auto result = train_generator(corpus, g.at("epochs").get<int>(), seed, generator_config(ctx),
                                gan_train_config(ctx));
  const auto stem = ctx.cfg_path("gan", "ckpt");
  fs::create_directories(stem.parent_path());
  save_generator(stem, result.g, seed);
  save_discriminator(fs::path(stem.string() + "_d"), result.d, seed);
  result.log.save(fs::path(stem.string() + "_log.json"));
  write_run_record(ctx, "train-gan");
}

inline DenTrainConfig den_train_config(const Context& ctx) {
  const auto& d = ctx.cfg.at("den");
  DenTrainConfig t;
  t.warmup_steps = d.at("warmup_steps").get<int>();
  t.batch = d.at("batch").get<int>();
  t.lr = d.at("lr").get<double>();
  t.dr_lr = d.at("dr_lr").get<double>();
  t.w_pixel = d.at("w_pixel").get<double>();
  t.w_adv = d.at("w_adv").get<double>();
  t.w_prior = d.at("w_prior").get<double>();
  t.eval_cap = d.at("eval_cap").get<int>();
  t.threads = ctx.threads;
  return t;
}

inline void cmd_train_den(const Context& ctx) {
  const Corpus corpus = need_corpus(ctx);
  const Generator<float> g = need_generator(ctx);
  ReconDiscriminator<float> dr = need_discriminator(ctx);
  const auto& d = ctx.cfg.at("den");
  const auto seed = d.at("seed").get<std::uint64_t>();
  auto result = train_den(corpus, g, dr, schedule_from(ctx.cfg), d.at("epochs").get<int>(), seed,
                          den_train_config(ctx));
  const auto stem = ctx.cfg_path("den", "ckpt");
  fs::create_directories(stem.parent_path());
  save_embedding(stem, result.den, seed);
  result.log.save(fs::path(stem.string() + "_log.json"));

  const auto fs_set =
      build_fewshot_set(corpus, result.den, d.at("fewshot_seed").get<std::uint64_t>());
  save_fewshot(fs_set, ctx.cfg_path("den", "fewshot"), ctx.cfg_path("corpus", "dir"));
  write_run_record(ctx, "train-den");
}

inline MaskGenConfig maskgen_config(const Context& ctx, const Generator<float>& g) {
  MaskGenConfig mc = MaskGenConfig::for_generator(g.cfg);
  const auto& m = ctx.cfg.at("maskgen");
  mc.reduced = m.at("reduced_channels").get<int>();
  mc.head = head_from_name(m.at("head").get<std::string>());
  mc.mode = oaff_mode_from_name(m.at("oaff").get<std::string>());
  return mc;
}

inline MaskGenTrainConfig maskgen_train_config(const Context& ctx) {
  const auto& m = ctx.cfg.at("maskgen");
  MaskGenTrainConfig t;
  t.lr = m.at("lr").get<double>();
  t.w_dq = m.at("w_dq").get<double>();
  t.dq_lr = m.at("dq_lr").get<double>();
  t.threads = ctx.threads;
  return t;
}

inline void cmd_train_maskgen(const Context& ctx) {
  const Generator<float> g = need_generator(ctx);
  const FewShotSet fs_set = need_fewshot(ctx);
  const auto& m = ctx.cfg.at("maskgen");
  const auto seed = m.at("seed").get<std::uint64_t>();

  QualityConfig qc;
  qc.img_size = g.cfg.img_size;
  QualityNet<float> dq(qc, derive_seed(seed, {0xD9ull}));
  auto result = train_maskgen(fs_set, g, &dq, m.at("epochs").get<int>(), seed,
                              maskgen_config(ctx, g), maskgen_train_config(ctx));
  const auto stem = ctx.cfg_path("maskgen", "ckpt");
  fs::create_directories(stem.parent_path());
  save_maskgen(stem, result.net, seed);
  save_quality(ctx.cfg_path("maskgen", "dq_ckpt"), dq, seed);
  result.log.save(fs::path(stem.string() + "_log.json"));
  write_run_record(ctx, "train-maskgen");
}

inline void cmd_train_dq(const Context& ctx) {
  const Corpus corpus = need_corpus(ctx);
  const Generator<float> g = need_generator(ctx);
  const MaskGeneratorNet<float> mg = need_maskgen(ctx);
  const auto& dqj = ctx.cfg.at("dq");
  const auto seed = dqj.at("seed").get<std::uint64_t>();
  const double lambda = ctx.cfg.at("synth").at("lambda").get<double>();

  std::vector<std::pair<const Image*, const Mask*>> real;
  for (const auto& e : corpus.entries)
    if (!e.is_test) real.emplace_back(&e.image, &e.mask);

  const int K = corpus.class_count;
  auto synth_stream = [&](std::uint64_t i) {
    const LatentCode z =
        sample_latent(derive_seed(seed, {0x57ull, i}), lambda, g.cfg.latent_dim);
    return generate_mask(g, mg, z, static_cast<ClassLabel>(i % K));
  };

  QualityConfig qc;
  qc.img_size = g.cfg.img_size;
  QualityNet<float> dq(qc, derive_seed(seed, {1}));
  DqTrainConfig tc;
  tc.steps_per_epoch = dqj.at("steps_per_epoch").get<int>();
  tc.batch = dqj.at("batch").get<int>();
  tc.lr = dqj.at("lr").get<double>();
  tc.threads = ctx.threads;
  const auto log = train_dq(dq, real, synth_stream, dqj.at("epochs").get<int>(), seed, tc);
  save_quality(ctx.cfg_path("maskgen", "dq_ckpt"), dq, seed);
  log.save(fs::path(ctx.cfg_path("maskgen", "dq_ckpt").string() + "_log.json"));
  write_run_record(ctx, "train-dq");
}

inline SynthDataset cmd_synthesize(const Context& ctx) {
  const Generator<float> g = need_generator(ctx);
  const MaskGeneratorNet<float> mg = need_maskgen(ctx);
  const QualityNet<float> dq = need_dq(ctx);
  const auto& s = ctx.cfg.at("synth");
  std::vector<int> class_set;
  for (int c = 0; c < ctx.cfg.at("class_count").get<int>(); ++c) class_set.push_back(c);
  const int workers = s.at("workers").get<int>();
  auto ds = synthesize_dataset(g, mg, dq, s.at("n_keep").get<int>(), s.at("lambda").get<double>(),
                               policy_from(ctx.cfg), class_set, s.at("seed").get<std::uint64_t>(),
                               ctx.cfg_path("synth", "dir"), workers > 0 ? workers : ctx.threads);
  write_run_record(ctx, "synthesize");
  return ds;
}

// Loads the training view named by sod.data ("synth" or "corpus").
struct SodTrainData {
  std::vector<std::pair<Image, Mask>> owned;  // synth pairs are materialized
  std::vector<std::pair<const Image*, const Mask*>> view;
};

inline SodTrainData sod_training_data(const Context& ctx, const Corpus* corpus,
                                      const SynthDataset* ds, int limit = 0) {
  SodTrainData data;
  const std::string source = ctx.cfg.at("sod").at("data").get<std::string>();
  if (source == "corpus") {
    require(corpus != nullptr, ErrKind::dependency, "train-sod: corpus not available");
    for (const auto& e : corpus->entries)
      if (!e.is_test) data.view.emplace_back(&e.image, &e.mask);
  } else {
    require(source == "synth", ErrKind::config, "config: sod.data must be synth or corpus");
    require(ds != nullptr, ErrKind::dependency, "train-sod: synthetic dataset not available");
    const std::size_t n = limit > 0 ? std::min<std::size_t>(limit, ds->size()) : ds->size();
    data.owned.reserve(n);
    for (std::size_t i = 0; i < n; ++i) data.owned.push_back(ds->load_pair(i));
    for (const auto& [img, mask] : data.owned) data.view.emplace_back(&img, &mask);
  }
  require(!data.view.empty(), ErrKind::empty_input, "train-sod: empty training set");
  return data;
}

inline SaliencyTrainConfig sod_train_config(const Context& ctx) {
  const auto& s = ctx.cfg.at("sod");
  SaliencyTrainConfig t;
  t.batch = s.at("batch").get<int>();
  t.lr = s.at("lr").get<double>();
  t.base = s.at("base").get<int>();
  t.threads = ctx.threads;
  return t;
}

inline void cmd_train_sod(const Context& ctx) {
  const std::string source = ctx.cfg.at("sod").at("data").get<std::string>();
  Corpus corpus;
  SynthDataset ds;
  if (source == "corpus")
    corpus = need_corpus(ctx);
  else
    ds = read_dataset(ctx.cfg_path("synth", "dir"));
  const auto data = sod_training_data(ctx, &corpus, &ds);
  const auto seed = ctx.cfg.at("sod").at("seed").get<std::uint64_t>();
  auto result =
      train_saliency(data.view, ctx.cfg.at("sod").at("epochs").get<int>(), seed, sod_train_config(ctx));
  const auto stem = ctx.cfg_path("sod", "ckpt");
  fs::create_directories(stem.parent_path());
  save_saliency(stem, result.net, seed);
  result.log.save(fs::path(stem.string() + "_log.json"));
  write_run_record(ctx, "train-sod");
}

// preds_dir, when given, supplies prediction rasters {id}.png copied against
// the corpus test split; otherwise the trained saliency net predicts.
inline PathwayResult cmd_eval(const Context& ctx, const std::string& preds_dir = "") {
  const Corpus corpus = need_corpus(ctx);
  auto test = corpus.split(true);
  if (test.empty()) test = corpus.split(false);
  const int cap = ctx.cfg.at("eval").at("cap").get<int>();
  const int n =
      cap > 0 ? std::min<int>(cap, static_cast<int>(test.size())) : static_cast<int>(test.size());

  PathwayResult result;
  std::vector<Mask> preds;
  if (!preds_dir.empty()) {
    for (int i = 0; i < n; ++i) {
      const fs::path p = fs::path(preds_dir) / (entry_file_id(test[i]->id) + ".png");
      require(fs::exists(p), ErrKind::dependency, "eval: missing prediction raster " + p.string());
      preds.push_back(load_mask_png(p, /*binarize=*/false));
    }
    std::vector<const Mask*> pp, gg;
    for (int i = 0; i < n; ++i) {
      pp.push_back(&preds[i]);
      gg.push_back(&test[i]->mask);
      result.mean_iou += iou(preds[i].binarize(0.5f), test[i]->mask) / n;
    }
    result.report = evaluate_battery(pp, gg, ctx.cfg.at("eval").at("beta2").get<double>(),
                                     ctx.cfg.at("eval").at("s_alpha").get<double>());
    result.count = n;
  } else {
    const SaliencyNet<float> net = load_saliency(ctx.cfg_path("sod", "ckpt"));
    result = eval_saliency_net(test, net, n, ctx.threads);
  }

  const auto out = ctx.cfg_path("eval", "out");
  fs::create_directories(out);
  json j = result.report.to_json();
  j["mean_iou"] = std::round(result.mean_iou * 1e6) / 1e6;
  j["count"] = result.count;
  write_text_file(out / "report.json", j.dump(1) + "\n");
  emit_plots(result.report, out);
  write_run_record(ctx, "eval");
  return result;
}

inline void cmd_analyze(const Context& ctx, const std::string& source) {
  StatsReport stats;
  if (source == "corpus") {
    stats = corpus_stats(need_corpus(ctx));
  } else {
    require(source == "synth", ErrKind::config, "analyze: --data must be corpus or synth");
    stats = dataset_stats(read_dataset(ctx.cfg_path("synth", "dir")));
  }
  const auto out = ctx.path("analysis-" + source);
  fs::create_directories(out);
  write_text_file(out / "stats.json", stats.to_json().dump(1) + "\n");

  // center-bias heatmap as an 8-bit grayscale raster
  std::vector<unsigned char> heat(stats.center_bias.size());
  for (std::size_t i = 0; i < heat.size(); ++i)
    heat[i] = static_cast<unsigned char>(std::lround(std::clamp(stats.center_bias[i], 0.0, 1.0) * 255));
  write_png(out / "center_bias.png", stats.h, stats.w, 1, heat.data());

  std::string size_csv;
  for (int b = 0; b < StatsReport::kSizeBins; ++b)
    size_csv += fixed6(static_cast<double>(b) / StatsReport::kSizeBins) + "," +
                fixed6(stats.size_hist[b]) + "\n";
  write_text_file(out / "size_hist.csv", size_csv);

  std::string contrast_csv;
  for (double v : stats.contrast) contrast_csv += fixed6(v) + "\n";
  write_text_file(out / "contrast.csv", contrast_csv);

  std::string class_csv;
  for (const auto& [cls, cnt] : stats.class_counts)
    class_csv += std::to_string(cls) + "," + std::to_string(cnt) + "\n";
  write_text_file(out / "class_counts.csv", class_csv);
  write_run_record(ctx, "analyze");
}

// --- sweeps and ablations -------------------------------------------------

struct Row {
  std::string axis;
  std::string value;
  MetricReport report;
  double mean_iou = 0;
};

inline void write_rows(const Context& ctx, const std::string& name, const std::vector<Row>& rows) {
  std::string csv = "axis,value,mae,max_f,mean_f,s_measure,auc,mean_iou\n";
  json arr = json::array();
  for (const auto& r : rows) {
    csv += r.axis + "," + r.value + "," + fixed6(r.report.mae) + "," + fixed6(r.report.max_f) +
           "," + fixed6(r.report.mean_f) + "," + fixed6(r.report.s_measure) + "," +
           fixed6(r.report.auc) + "," + fixed6(r.mean_iou) + "\n";
    json jr{{"axis", r.axis},
            {"value", r.value},
            {"mae", std::round(r.report.mae * 1e6) / 1e6},
            {"max_f", std::round(r.report.max_f * 1e6) / 1e6},
            {"mean_f", std::round(r.report.mean_f * 1e6) / 1e6},
            {"s_measure", std::round(r.report.s_measure * 1e6) / 1e6},
            {"auc", std::round(r.report.auc * 1e6) / 1e6},
            {"mean_iou", std::round(r.mean_iou * 1e6) / 1e6}};
    arr.push_back(jr);
  }
  write_text_file(ctx.path(name + ".csv"), csv);
  write_text_file(ctx.path(name + ".json"), arr.dump(1) + "\n");
}

inline Row sod_row(const Context& ctx, const std::string& axis, const std::string& value,
                   const std::vector<std::pair<const Image*, const Mask*>>& data,
                   const std::vector<const CorpusEntry*>& test, std::uint64_t seed) {
  auto trained =
      train_saliency(data, ctx.cfg.at("sod").at("epochs").get<int>(), seed, sod_train_config(ctx));
  const int cap = ctx.cfg.at("eval").at("cap").get<int>();
  const auto r = eval_saliency_net(test, trained.net, cap, ctx.threads);
  return Row{axis, value, r.report, r.mean_iou};
}

inline void cmd_sweep(const Context& ctx, const std::string& axis,
                      const std::vector<std::string>& values) {
  require(!values.empty(), ErrKind::config, "sweep: no values given");
  const Corpus corpus = need_corpus(ctx);
  auto test = corpus.split(true);
  if (test.empty()) test = corpus.split(false);
  std::vector<Row> rows;

  if (axis == "data-amount") {
    const SynthDataset ds = read_dataset(ctx.cfg_path("synth", "dir"));
    for (std::size_t i = 0; i < values.size(); ++i) {
      const int n = std::stoi(values[i]);
      require(n >= 1 && static_cast<std::size_t>(n) <= ds.size(), ErrKind::config,
              "sweep: data amount " + values[i] + " exceeds the synthetic pool");
      const auto data = sod_training_data(ctx, nullptr, &ds, n);
      rows.push_back(sod_row(ctx, axis, values[i], data.view, test,
                             ctx.cfg.at("sod").at("seed").get<std::uint64_t>() + i));
    }
  } else if (axis == "lambda") {
    const Generator<float> g = need_generator(ctx);
    const MaskGeneratorNet<float> mg = need_maskgen(ctx);
    const QualityNet<float> dq = need_dq(ctx);
    std::vector<int> class_set;
    for (int c = 0; c < ctx.cfg.at("class_count").get<int>(); ++c) class_set.push_back(c);
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double lambda = std::stod(values[i]);
      const auto dir = ctx.path(ctx.cfg.at("synth").at("dir").get<std::string>() + "-lambda-" +
                                values[i]);
      const auto ds = synthesize_dataset(
          g, mg, dq, ctx.cfg.at("synth").at("n_keep").get<int>(), lambda, policy_from(ctx.cfg),
          class_set, ctx.cfg.at("synth").at("seed").get<std::uint64_t>() + i, dir, ctx.threads);
      const auto data = sod_training_data(ctx, nullptr, &ds);
      rows.push_back(sod_row(ctx, axis, values[i], data.view, test,
                             ctx.cfg.at("sod").at("seed").get<std::uint64_t>() + i));
    }
  } else {
    fail(ErrKind::config, "sweep: unknown axis '" + axis + "' (use data-amount or lambda)");
  }
  write_rows(ctx, "sweep-" + axis, rows);
  write_run_record(ctx, "sweep");
}

inline Row pathway_row(const Context& ctx, const std::string& axis, const std::string& value,
                       const EmbeddingNet<float>& den, const Generator<float>& g,
                       const MaskGeneratorNet<float>& mg,
                       const std::vector<const CorpusEntry*>& test) {
  const int cap = ctx.cfg.at("eval").at("cap").get<int>();
  const auto r = eval_reconstruction_pathway(test, den, g, mg, cap, ctx.threads);
  return Row{axis, value, r.report, r.mean_iou};
}

inline void cmd_ablate(const Context& ctx, const std::string& axis) {
  const Corpus corpus = need_corpus(ctx);
  auto test = corpus.split(true);
  if (test.empty()) test = corpus.split(false);
  std::vector<Row> rows;

  if (axis == "head" || axis == "oaff") {
    const Generator<float> g = need_generator(ctx);
    const EmbeddingNet<float> den = need_embedding(ctx);
    const FewShotSet fs_set = need_fewshot(ctx);
    const auto& m = ctx.cfg.at("maskgen");
    const auto seed = m.at("seed").get<std::uint64_t>();

    std::vector<std::string> variants;
    if (axis == "head")
      variants = {"cnn-s", "cnn-m", "cnn-l", "mlp-s", "mlp-m", "mlp-l"};
    else
      variants = {"full", "ga-only", "none"};

    for (const auto& v : variants) {
      MaskGenConfig mc = maskgen_config(ctx, g);
      if (axis == "head")
        mc.head = head_from_name(v);
      else
        mc.mode = oaff_mode_from_name(v);
      QualityConfig qc;
      qc.img_size = g.cfg.img_size;
      QualityNet<float> dq(qc, derive_seed(seed, {0xD9ull}));
      auto trained = train_maskgen(fs_set, g, &dq, m.at("epochs").get<int>(), seed, mc,
                                   maskgen_train_config(ctx));
      rows.push_back(pathway_row(ctx, axis, v, den, g, trained.net, test));
    }
  } else if (axis == "dq") {
    const Generator<float> g = need_generator(ctx);
    const MaskGeneratorNet<float> mg = need_maskgen(ctx);
    const QualityNet<float> dq = need_dq(ctx);
    std::vector<int> class_set;
    for (int c = 0; c < ctx.cfg.at("class_count").get<int>(); ++c) class_set.push_back(c);
    const int n_keep = ctx.cfg.at("synth").at("n_keep").get<int>();
    const double lambda = ctx.cfg.at("synth").at("lambda").get<double>();
    const auto seed = ctx.cfg.at("synth").at("seed").get<std::uint64_t>();

    const auto with_dir = ctx.path("ablate-dq-with");
    const auto without_dir = ctx.path("ablate-dq-without");
    const auto ds_with = synthesize_dataset(g, mg, dq, n_keep, lambda, policy_from(ctx.cfg),
                                            class_set, seed, with_dir, ctx.threads);
    const auto ds_without = synthesize_dataset(g, mg, dq, n_keep, lambda,
                                               FilterPolicy::threshold(0.0), class_set, seed,
                                               without_dir, ctx.threads);
    const auto data_with = sod_training_data(ctx, nullptr, &ds_with);
    const auto data_without = sod_training_data(ctx, nullptr, &ds_without);
    const auto sod_seed = ctx.cfg.at("sod").at("seed").get<std::uint64_t>();
    rows.push_back(sod_row(ctx, axis, "with-dq", data_with.view, test, sod_seed));
    rows.push_back(sod_row(ctx, axis, "without-dq", data_without.view, test, sod_seed));
  } else if (axis == "den-vs-vae") {
    const Generator<float> g = need_generator(ctx);
    ReconDiscriminator<float> dr = need_discriminator(ctx);
    const auto& d = ctx.cfg.at("den");
    const auto& m = ctx.cfg.at("maskgen");
    const auto epochs = d.at("epochs").get<int>();
    const auto seed = d.at("seed").get<std::uint64_t>();

    for (const std::string v : {"den", "vae"}) {
      DenTrainResult enc =
          v == "den" ? train_den(corpus, g, dr, schedule_from(ctx.cfg), epochs, seed,
                                 den_train_config(ctx))
                     : train_vae_baseline(corpus, g, epochs, seed, den_train_config(ctx));
      const auto fs_set =
          build_fewshot_set(corpus, enc.den, d.at("fewshot_seed").get<std::uint64_t>());
      QualityConfig qc;
      qc.img_size = g.cfg.img_size;
      QualityNet<float> dq(qc, derive_seed(seed, {0xD9ull}));
      auto trained = train_maskgen(fs_set, g, &dq, m.at("epochs").get<int>(),
                                   m.at("seed").get<std::uint64_t>(), maskgen_config(ctx, g),
                                   maskgen_train_config(ctx));
      rows.push_back(pathway_row(ctx, axis, v, enc.den, g, trained.net, test));
    }
  } else {
    fail(ErrKind::config, "ablate: unknown axis '" + axis +
                              "' (use den-vs-vae, oaff, head or dq)");
  }
  write_rows(ctx, "ablate-" + axis, rows);
  write_run_record(ctx, "ablate");
}

}  // namespace sodgan::cli
