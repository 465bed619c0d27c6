#pragma once

// Synthetic dataset factory: sample truncated latents round-robin over the
// class set, generate image-mask pairs, score them with D_q, filter by
// policy, and persist rasters plus a manifest.
//
// Attempt identity is the latent-seed index, not execution order: attempt i
// uses derive_seed(seed, {i}) and class_set[i % |classes|]. The kept set is
// the first n_keep qualifying attempts in index order, so any worker count
// reproduces the single-worker record set bit-for-bit.
//
// Layout: {dir}/images/{id}.png, {dir}/masks/{id}.png (binary, 0/255),
// {dir}/manifest.jsonl (one record per examined attempt), {dir}/header.json.

#include <chrono>
#include <ctime>

#include "sodgan/maskgen/maskgen.hpp"
#include "sodgan/stats.hpp"

namespace sodgan {

struct SynthRecord {
  int id = 0;
  ClassLabel class_id = 0;
  std::uint64_t latent_seed = 0;
  double lambda = 1.0;
  double quality_score = 0;
  bool kept = false;
  std::string image_path, mask_path;

  nlohmann::json to_json() const {
    nlohmann::json j{{"id", id},
                     {"class", class_id},
                     {"latent_seed", latent_seed},
                     {"lambda", std::round(lambda * 1e6) / 1e6},
                     {"quality_score", std::round(quality_score * 1e6) / 1e6},
                     {"kept", kept}};
    if (kept) {
      j["image_path"] = image_path;
      j["mask_path"] = mask_path;
    }
    return j;
  }
};

struct SynthHeader {
  std::string generator_checksum, maskgen_checksum, dq_checksum;
  std::string policy;
  std::string created_at;
  double lambda = 1.0;
  std::uint64_t seed = 0;
  int n_keep = 0;
  long long attempts = 0;
  double acceptance_rate = 0;
  std::vector<int> class_set;
  int image_size = 0;
  std::string manifest_checksum;
};

struct SynthManifest {
  SynthHeader header;
  std::vector<SynthRecord> records;
};

// Lazy-loading dataset handle: rasters are read on demand.
struct SynthDataset {
  fs::path dir;
  SynthManifest manifest;
  std::vector<int> kept_indices;  // indices into manifest.records

  std::size_t size() const { return kept_indices.size(); }

  std::pair<Image, Mask> load_pair(std::size_t i) const {
    const auto& rec = manifest.records[kept_indices[i]];
    return {load_image_png(dir / rec.image_path), load_mask_png(dir / rec.mask_path, true)};
  }
  ClassLabel class_of(std::size_t i) const { return manifest.records[kept_indices[i]].class_id; }
};

namespace detail {

inline std::string now_iso8601() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace detail

struct SynthesisError : Error {
  double acceptance_rate;
  SynthesisError(double rate, const std::string& msg)
      : Error(ErrKind::filter_too_strict, msg), acceptance_rate(rate) {}
};

inline SynthDataset synthesize_dataset(const Generator<float>& g,
                                       const MaskGeneratorNet<float>& mg,
                                       const QualityNet<float>& dq, int n_keep, double lambda,
                                       const FilterPolicy& policy,
                                       const std::vector<int>& class_set, std::uint64_t seed,
                                       const fs::path& out_dir, int workers = 1) {
  require(n_keep >= 1, ErrKind::invalid_argument, "synthesize: n_keep must be >= 1");
  require(lambda > 0.0, ErrKind::invalid_argument, "synthesize: lambda must be > 0");
  require(!class_set.empty(), ErrKind::invalid_argument, "synthesize: empty class set");
  require(g.trained && mg.trained, ErrKind::dependency,
          "synthesize: generator and mask generator must be trained");

  const long long cap = 20LL * n_keep;
  const int K = static_cast<int>(class_set.size());

  auto attempt_score = [&](long long idx) {
    const std::uint64_t zseed = derive_seed(seed, {static_cast<std::uint64_t>(idx)});
    const ClassLabel cls = class_set[idx % K];
    const LatentCode z = sample_latent(zseed, lambda, g.cfg.latent_dim);
    auto [img, prob] = generate_mask(g, mg, z, cls);
    return score_pair(dq, img, prob);
  };

  // Pass 1: scores in attempt order.
  std::vector<double> scores;
  long long attempts = 0;
  long long cut = -1;  // index of the attempt that completes the kept set

  if (policy.mode == FilterPolicy::Mode::threshold) {
    const int block = std::max(32, 8 * std::max(1, workers));
    long long kept = 0;
    while (attempts < cap && kept < n_keep) {
      const long long hi = std::min(cap, attempts + block);
      const int n = static_cast<int>(hi - attempts);
      std::vector<double> block_scores(n);
      const long long base = attempts;
      parallel_for(n, workers, [&](int i) { block_scores[i] = attempt_score(base + i); });
      for (int i = 0; i < n && kept < n_keep; ++i) {
        scores.push_back(block_scores[i]);
        ++attempts;
        if (block_scores[i] >= policy.tau) {
          ++kept;
          if (kept == n_keep) cut = attempts - 1;
        }
      }
    }
    if (kept < n_keep) {
      const double rate = attempts > 0 ? static_cast<double>(kept) / attempts : 0.0;
      throw SynthesisError(rate, "synthesize: filter too strict, acceptance rate " + fixed6(rate) +
                                     " after " + std::to_string(attempts) + " attempts");
    }
  } else {
    // Fixed pool for the top-fraction policy.
    attempts = std::min<long long>(
        cap, static_cast<long long>(std::ceil(n_keep / std::max(1e-9, policy.rho))));
    scores.resize(attempts);
    parallel_for(static_cast<int>(attempts), workers,
                 [&](int i) { scores[i] = attempt_score(i); });
    cut = attempts - 1;
  }

  // Pass 2: select kept indices.
  std::vector<char> kept_flag(scores.size(), 0);
  if (policy.mode == FilterPolicy::Mode::threshold) {
    int kept = 0;
    for (std::size_t i = 0; i < scores.size() && kept < n_keep; ++i)
      if (scores[i] >= policy.tau) {
        kept_flag[i] = 1;
        ++kept;
      }
  } else {
    std::vector<ScoredPair> pool(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) pool[i] = {scores[i], static_cast<int>(i)};
    auto kept_pairs = filter_pool(pool, policy);
    int kept = 0;
    for (const auto& p : kept_pairs) {
      if (kept == n_keep) break;
      kept_flag[p.index] = 1;
      ++kept;
    }
    require(kept == n_keep, ErrKind::filter_too_strict,
            "synthesize: top-fraction pool too small");
  }

  // Pass 3: regenerate kept pairs and write artifacts.
  fs::create_directories(out_dir / "images");
  fs::create_directories(out_dir / "masks");
  SynthManifest manifest;
  manifest.records.resize(scores.size());
  parallel_for(static_cast<int>(scores.size()), workers, [&](int i) {
    SynthRecord rec;
    rec.id = i;
    rec.class_id = class_set[i % K];
    rec.latent_seed = derive_seed(seed, {static_cast<std::uint64_t>(i)});
    rec.lambda = lambda;
    rec.quality_score = std::round(scores[i] * 1e6) / 1e6;  // manifest precision
    rec.kept = kept_flag[i] != 0;
    if (rec.kept) {
      const LatentCode z = sample_latent(rec.latent_seed, lambda, g.cfg.latent_dim);
      auto [img, prob] = generate_mask(g, mg, z, rec.class_id);
      const Mask bin = prob.binarize(0.5f);
      const std::string fid = entry_file_id(rec.id);
      rec.image_path = "images/" + fid + ".png";
      rec.mask_path = "masks/" + fid + ".png";
      save_image_png(out_dir / rec.image_path, img);
      save_mask_png(out_dir / rec.mask_path, bin);
    }
    manifest.records[i] = rec;
  });

  std::string jsonl;
  for (const auto& rec : manifest.records) jsonl += rec.to_json().dump() + "\n";
  write_text_file(out_dir / "manifest.jsonl", jsonl);

  auto& h = manifest.header;
  h.generator_checksum = hex64(g.store.checksum());
  h.maskgen_checksum = hex64(mg.store.checksum());
  h.dq_checksum = hex64(dq.store.checksum());
  h.policy = policy.describe();
  h.created_at = detail::now_iso8601();
  h.lambda = lambda;
  h.seed = seed;
  h.n_keep = n_keep;
  h.attempts = static_cast<long long>(scores.size());
  h.acceptance_rate =
      scores.empty() ? 0.0 : static_cast<double>(n_keep) / static_cast<double>(scores.size());
  h.class_set = class_set;
  h.image_size = g.cfg.img_size;
  h.manifest_checksum = hex64(fnv1a(jsonl));
  nlohmann::json hj{{"generator_checksum", h.generator_checksum},
                    {"maskgen_checksum", h.maskgen_checksum},
                    {"dq_checksum", h.dq_checksum},
                    {"policy", h.policy},
                    {"created_at", h.created_at},
                    {"lambda", h.lambda},
                    {"seed", h.seed},
                    {"n_keep", h.n_keep},
                    {"attempts", h.attempts},
                    {"acceptance_rate", std::round(h.acceptance_rate * 1e6) / 1e6},
                    {"class_set", h.class_set},
                    {"image_size", h.image_size},
                    {"manifest_checksum", h.manifest_checksum}};
  write_text_file(out_dir / "header.json", hj.dump(1) + "\n");
  (void)cut;

  SynthDataset ds;
  ds.dir = out_dir;
  ds.manifest = std::move(manifest);
  for (std::size_t i = 0; i < ds.manifest.records.size(); ++i)
    if (ds.manifest.records[i].kept) ds.kept_indices.push_back(static_cast<int>(i));
  return ds;
}

inline SynthDataset read_dataset(const fs::path& dir) {
  require(fs::exists(dir / "manifest.jsonl") && fs::exists(dir / "header.json"),
          ErrKind::dependency, "synthetic dataset not found under " + dir.string());
  SynthDataset ds;
  ds.dir = dir;
  const std::string jsonl = read_text_file(dir / "manifest.jsonl");
  const auto hj = nlohmann::json::parse(read_text_file(dir / "header.json"));
  require(hj.at("manifest_checksum").get<std::string>() == hex64(fnv1a(jsonl)),
          ErrKind::corrupt_dataset, "manifest checksum mismatch under " + dir.string());
  auto& h = ds.manifest.header;
  h.generator_checksum = hj.at("generator_checksum").get<std::string>();
  h.maskgen_checksum = hj.at("maskgen_checksum").get<std::string>();
  h.dq_checksum = hj.at("dq_checksum").get<std::string>();
  h.policy = hj.at("policy").get<std::string>();
  h.created_at = hj.at("created_at").get<std::string>();
  h.lambda = hj.at("lambda").get<double>();
  h.seed = hj.at("seed").get<std::uint64_t>();
  h.n_keep = hj.at("n_keep").get<int>();
  h.attempts = hj.at("attempts").get<long long>();
  h.acceptance_rate = hj.at("acceptance_rate").get<double>();
  h.class_set = hj.at("class_set").get<std::vector<int>>();
  h.image_size = hj.at("image_size").get<int>();
  h.manifest_checksum = hj.at("manifest_checksum").get<std::string>();

  std::istringstream in(jsonl);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    SynthRecord rec;
    rec.id = j.at("id").get<int>();
    rec.class_id = j.at("class").get<int>();
    rec.latent_seed = j.at("latent_seed").get<std::uint64_t>();
    rec.lambda = j.at("lambda").get<double>();
    rec.quality_score = j.at("quality_score").get<double>();
    rec.kept = j.at("kept").get<bool>();
    if (rec.kept) {
      rec.image_path = j.at("image_path").get<std::string>();
      rec.mask_path = j.at("mask_path").get<std::string>();
      require(fs::exists(dir / rec.image_path), ErrKind::corrupt_dataset,
              "missing image file: " + rec.image_path);
      require(fs::exists(dir / rec.mask_path), ErrKind::corrupt_dataset,
              "missing mask file: " + rec.mask_path);
      ds.kept_indices.push_back(static_cast<int>(ds.manifest.records.size()));
    }
    ds.manifest.records.push_back(std::move(rec));
  }
  return ds;
}

inline StatsReport dataset_stats(const SynthDataset& ds) {
  require(ds.size() > 0, ErrKind::empty_input, "dataset_stats: empty dataset");
  std::vector<std::pair<Image, Mask>> pairs;
  pairs.reserve(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) pairs.push_back(ds.load_pair(i));
  std::vector<PairView> views;
  for (std::size_t i = 0; i < pairs.size(); ++i)
    views.push_back({&pairs[i].first, &pairs[i].second, ds.class_of(i)});
  return compute_stats(views);
}

}  // namespace sodgan
