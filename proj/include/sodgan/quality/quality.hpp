#pragma once

// Quality-aware discriminator over image-mask pairs: a strided conv
// classifier on the 4-channel stack image (+) mask, trained real-vs-synthetic,
// plus the pool filtering policies.

#include <functional>

#include "sodgan/gan/generator.hpp"

namespace sodgan {

struct QualityConfig {
  int img_size = 64;
  int base_channels = 12;
  int max_channels = 64;

  std::string arch_string() const {
    return "dq:v1:size=" + std::to_string(img_size) + ":base=" + std::to_string(base_channels);
  }
};

template <class T>
struct QualityNet {
  QualityConfig cfg;
  nn::ParamStore<T> store;
  ConvTrunk<T> trunk;
  nn::Linear<T> head;
  bool trained = false;

  QualityNet() = default;
  QualityNet(const QualityConfig& c, std::uint64_t init_seed) : cfg(c) {
    Rng rng(derive_seed(init_seed, {0xD0ull}));
    trunk = ConvTrunk<T>(store, "trunk", cfg.img_size, 4, cfg.base_channels, cfg.max_channels, rng);
    head = nn::Linear<T>(store, "head", trunk.out_ch, 1, rng);
  }

  struct Acts {
    typename ConvTrunk<T>::Acts trunk;
    Tensor<T> top;
    std::vector<T> feat;
  };

  // Input: 4-channel stack (image rgb + mask), (4,H,W).
  T logit(const Tensor<T>& x, Acts& a) const {
    require(x.shape.size() == 3 && x.shape[0] == 4 && x.shape[1] == cfg.img_size &&
                x.shape[2] == cfg.img_size,
            ErrKind::invalid_argument, "quality net: input shape mismatch");
    a.top = trunk.forward(store, x, a.trunk);
    a.feat = nn::gap_forward(a.top);
    return head.fwd(store, a.feat)[0];
  }

  Tensor<T> backward(T dlogit, const Acts& a, T* g, bool need_dx) const {
    auto dfeat = head.bwd(store, a.feat, {dlogit}, g);
    Tensor<T> dtop = nn::gap_backward(a.top.shape, dfeat);
    return trunk.backward(store, dtop, a.trunk, g, need_dx);
  }
};

template <class T>
Tensor<T> stack_pair(const Image& img, const Tensor<T>& mask_hw) {
  Tensor<T> x({4, img.h, img.w});
  for (std::size_t i = 0; i < img.v.size(); ++i) x.v[i] = static_cast<T>(img.v[i]);
  const std::size_t off = static_cast<std::size_t>(3) * img.h * img.w;
  for (std::size_t i = 0; i < mask_hw.size(); ++i) x.v[off + i] = mask_hw.v[i];
  return x;
}

template <class T>
Tensor<T> stack_pair(const Image& img, const Mask& mask) {
  require(img.h == mask.h && img.w == mask.w, ErrKind::invalid_argument,
          "score_pair: image/mask shape mismatch");
  Tensor<T> m({mask.h, mask.w});
  for (std::size_t i = 0; i < mask.v.size(); ++i) m.v[i] = static_cast<T>(mask.v[i]);
  return stack_pair(img, m);
}

inline double score_pair(const QualityNet<float>& dq, const Image& img, const Mask& mask) {
  typename QualityNet<float>::Acts a;
  const float l = dq.logit(stack_pair<float>(img, mask), a);
  return nn::clamp_prob(nn::sigmoid_s(static_cast<double>(l)));
}

// ---------------------------------------------------------------------------
// Filtering policy

struct FilterPolicy {
  enum class Mode { threshold, top_fraction };
  Mode mode = Mode::threshold;
  double tau = 0.5;  // threshold mode: keep score >= tau
  double rho = 0.5;  // top-fraction mode: keep ceil(rho*N) best

  static FilterPolicy threshold(double tau) { return {Mode::threshold, tau, 0.5}; }
  static FilterPolicy top_fraction(double rho) {
    require(rho > 0.0 && rho <= 1.0, ErrKind::invalid_argument,
            "filter policy: rho must lie in (0,1]");
    return {Mode::top_fraction, 0.5, rho};
  }

  std::string describe() const {
    return mode == Mode::threshold ? "threshold tau=" + fixed6(tau)
                                   : "top-fraction rho=" + fixed6(rho);
  }
};

struct ScoredPair {
  double score = 0;
  int index = 0;  // caller-side identity; order-stable filtering
};

// Keeps the qualifying subset in the original (stable) order.
inline std::vector<ScoredPair> filter_pool(const std::vector<ScoredPair>& pool,
                                           const FilterPolicy& policy) {
  std::vector<ScoredPair> kept;
  if (policy.mode == FilterPolicy::Mode::threshold) {
    for (const auto& p : pool)
      if (p.score >= policy.tau) kept.push_back(p);
    return kept;
  }
  const std::size_t n_keep =
      static_cast<std::size_t>(std::ceil(policy.rho * static_cast<double>(pool.size())));
  std::vector<int> order(pool.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return pool[a].score > pool[b].score; });
  std::vector<char> keep(pool.size(), 0);
  for (std::size_t i = 0; i < std::min(n_keep, pool.size()); ++i) keep[order[i]] = 1;
  for (std::size_t i = 0; i < pool.size(); ++i)
    if (keep[i]) kept.push_back(pool[i]);
  return kept;
}

// ---------------------------------------------------------------------------
// Adversarial training of D_q: maximize
//   log D_q(x_real, y_real) + log(1 - D_q(x_syn, y_syn)).
// The synthetic stream is a callback so the caller can plug in the live mask
// generator.

struct DqTrainConfig {
  int steps_per_epoch = 32;
  int batch = 8;
  double lr = 1e-3;
  int threads = 1;
};

inline TrainLog train_dq(QualityNet<float>& dq,
                         const std::vector<std::pair<const Image*, const Mask*>>& real_pairs,
                         const std::function<std::pair<Image, Mask>(std::uint64_t)>& synth_stream,
                         int epochs, std::uint64_t seed, DqTrainConfig cfg = {}) {
  require(!real_pairs.empty(), ErrKind::empty_input, "train_dq: no real pairs");
  require(synth_stream != nullptr, ErrKind::empty_input, "train_dq: no synthetic stream");
  require(epochs >= 1, ErrKind::invalid_argument, "train_dq: epochs must be >= 1");

  nn::Adam<float> opt(cfg.lr, 0.5, 0.999);
  Rng rng(derive_seed(seed, {0xD9ull}));
  nn::BatchGrads<float> grads;
  TrainLog log;
  std::uint64_t synth_counter = 0;

  for (int epoch = 0; epoch < epochs; ++epoch) {
    double ep_obj = 0, ep_real = 0, ep_syn = 0;
    for (int step = 0; step < cfg.steps_per_epoch; ++step) {
      const int bs = cfg.batch;
      std::vector<const Image*> rimg(bs);
      std::vector<const Mask*> rmask(bs);
      std::vector<std::pair<Image, Mask>> syn(bs);
      for (int i = 0; i < bs; ++i) {
        const auto& pick = real_pairs[rng.uniform_int(0, static_cast<std::int64_t>(real_pairs.size()) - 1)];
        rimg[i] = pick.first;
        rmask[i] = pick.second;
        syn[i] = synth_stream(synth_counter++);
      }
      grads.reset(bs, dq.store.size());
      std::vector<double> obj(bs), pr(bs), ps(bs);
      parallel_for(bs, cfg.threads, [&](int i) {
        typename QualityNet<float>::Acts ar, as;
        const float lr_ = dq.logit(stack_pair<float>(*rimg[i], *rmask[i]), ar);
        const float ls = dq.logit(stack_pair<float>(syn[i].first, syn[i].second), as);
        pr[i] = nn::clamp_prob(nn::sigmoid_s(static_cast<double>(lr_)));
        ps[i] = nn::clamp_prob(nn::sigmoid_s(static_cast<double>(ls)));
        obj[i] = std::log(pr[i]) + std::log(1.0 - ps[i]);
        float* g = grads.slot(i).data();
        // minimize the negated objective
        dq.backward(static_cast<float>(-(1.0 - pr[i])), ar, g, false);
        dq.backward(static_cast<float>(ps[i]), as, g, false);
      });
      opt.step(dq.store.w, grads.reduce_mean());
      for (int i = 0; i < bs; ++i) {
        ep_obj += obj[i] / (bs * cfg.steps_per_epoch);
        ep_real += pr[i] / (bs * cfg.steps_per_epoch);
        ep_syn += ps[i] / (bs * cfg.steps_per_epoch);
      }
    }
    log.epochs.push_back({{"epoch", static_cast<double>(epoch)},
                          {"objective", ep_obj},
                          {"score_real", ep_real},
                          {"score_syn", ep_syn}});
  }
  dq.trained = true;
  return log;
}

// ---------------------------------------------------------------------------
// Checkpoint I/O

inline void save_quality(const fs::path& stem, const QualityNet<float>& q,
                         std::uint64_t train_seed) {
  nn::save_store(fs::path(stem.string() + ".bin"), q.store);
  nlohmann::json j{{"kind", "quality_discriminator"},
                   {"arch_hash", hex64(fnv1a(q.cfg.arch_string()))},
                   {"img_size", q.cfg.img_size},
                   {"base_channels", q.cfg.base_channels},
                   {"max_channels", q.cfg.max_channels},
                   {"seed", train_seed},
                   {"trained", q.trained}};
  write_text_file(fs::path(stem.string() + ".json"), j.dump(1) + "\n");
}

inline QualityNet<float> load_quality(const fs::path& stem) {
  require(fs::exists(fs::path(stem.string() + ".json")), ErrKind::dependency,
          "missing quality checkpoint: " + stem.string() + ".json");
  const auto j = nlohmann::json::parse(read_text_file(fs::path(stem.string() + ".json")));
  QualityConfig cfg;
  cfg.img_size = j.at("img_size").get<int>();
  cfg.base_channels = j.at("base_channels").get<int>();
  cfg.max_channels = j.at("max_channels").get<int>();
  QualityNet<float> q(cfg, 0);
  nn::load_store(fs::path(stem.string() + ".bin"), q.store);
  q.trained = j.value("trained", true);
  return q;
}

}  // namespace sodgan
