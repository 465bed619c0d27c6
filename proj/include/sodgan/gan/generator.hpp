#pragma once

// Class-conditional image generator and its real/fake discriminator.
//
// Generator: [z ; class-embedding] -> linear stem (base x 4 x 4), then one
// block per doubling up to the output resolution: nearest-2x upsample,
// 3x3 conv, spatial norm with class-conditional gain/bias, leaky ReLU.
// Channel widths halve per block; the recorded feature pyramid is the
// post-activation output of every block, coarse to fine, and the last level
// sits at the output resolution. A final 3x3 conv + sigmoid maps to RGB.
//
// Discriminator: strided conv trunk, GAP features, linear head plus a
// class-projection term on the pooled features.

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "sodgan/nn/serialize.hpp"
#include "sodgan/nn/store.hpp"
#include "sodgan/rng.hpp"
#include "sodgan/threading.hpp"
#include "sodgan/types.hpp"

namespace sodgan {

// ---------------------------------------------------------------------------
// Training log shared by all trainers.

struct TrainLog {
  std::vector<std::map<std::string, double>> epochs;

  nlohmann::json to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& e : epochs) arr.push_back(e);
    return arr;
  }
  void save(const fs::path& path) const { write_text_file(path, to_json().dump(1) + "\n"); }
};

// ---------------------------------------------------------------------------

struct GeneratorConfig {
  int img_size = 64;
  int latent_dim = 64;
  int class_count = 8;
  int emb_dim = 16;
  int base_channels = 64;  // width at the 4x4 stem; halves per block

  int blocks() const {
    int l = 0, s = 4;
    while (s < img_size) {
      s *= 2;
      ++l;
    }
    require(s == img_size && l >= 1, ErrKind::invalid_argument,
            "generator: img_size must be 4 * 2^L");
    return l;
  }
  int block_channels(int i) const { return base_channels >> (i + 1); }

  std::string arch_string() const {
    return "gen:v1:size=" + std::to_string(img_size) + ":d=" + std::to_string(latent_dim) +
           ":K=" + std::to_string(class_count) + ":emb=" + std::to_string(emb_dim) +
           ":base=" + std::to_string(base_channels);
  }
};

template <class T>
struct Generator {
  GeneratorConfig cfg;
  nn::ParamStore<T> store;
  nn::Embedding<T> cls_emb;
  nn::Linear<T> stem;
  std::vector<nn::Conv<T>> block_conv;
  std::vector<nn::Linear<T>> block_cond;  // emb -> [dgamma ; beta], 2*C per block
  nn::Conv<T> to_rgb;
  bool trained = false;

  Generator() = default;
  Generator(const GeneratorConfig& c, std::uint64_t init_seed) : cfg(c) {
    const int L = cfg.blocks();
    require(cfg.base_channels >> L >= 1, ErrKind::invalid_argument,
            "generator: base_channels too small for the block ladder");
    Rng rng(derive_seed(init_seed, {0x6E11ull}));
    cls_emb = nn::Embedding<T>(store, "cls_emb", cfg.class_count, cfg.emb_dim, rng);
    stem = nn::Linear<T>(store, "stem", cfg.latent_dim + cfg.emb_dim, cfg.base_channels * 16, rng);
    int cin = cfg.base_channels;
    for (int i = 0; i < L; ++i) {
      const int cout = cfg.block_channels(i);
      block_conv.emplace_back(store, "block" + std::to_string(i) + ".conv", cin, cout, 3, 1, 1,
                              rng);
      block_cond.emplace_back(store, "block" + std::to_string(i) + ".cond", cfg.emb_dim, 2 * cout,
                              rng, 0.1);
      cin = cout;
    }
    to_rgb = nn::Conv<T>(store, "to_rgb", cin, 3, 3, 1, 1, rng);
  }

  struct Acts {
    std::vector<T> emb, zin, stem_out;
    Tensor<T> stem_map;
    struct Block {
      Tensor<T> up, pre, normed, scaled;
      nn::NormStats<T> st;
      std::vector<T> cond;  // [dgamma ; beta]
      Tensor<T> act;
    };
    std::vector<Block> blocks;
    Tensor<T> rgb_pre, img;
  };

  // Returns the RGB image (3,H,W) in [0,1]; block activations live in acts.
  const Tensor<T>& forward(const std::vector<T>& z, ClassLabel cls, Acts& a) const {
    require(static_cast<int>(z.size()) == cfg.latent_dim, ErrKind::invalid_argument,
            "generator: latent dimension mismatch");
    require(cls >= 0 && cls < cfg.class_count, ErrKind::invalid_argument,
            "generator: class label out of range");
    a.emb = cls_emb.fwd(store, cls);
    a.zin = z;
    a.zin.insert(a.zin.end(), a.emb.begin(), a.emb.end());
    a.stem_out = stem.fwd(store, a.zin);
    a.stem_map = Tensor<T>({cfg.base_channels, 4, 4}, a.stem_out);

    const int L = static_cast<int>(block_conv.size());
    a.blocks.resize(L);
    const Tensor<T>* x = &a.stem_map;
    for (int i = 0; i < L; ++i) {
      auto& b = a.blocks[i];
      b.up = nn::upsample_nearest2x_forward(*x);
      b.pre = block_conv[i].fwd(store, b.up);
      b.normed = nn::spatial_norm_forward(b.pre, b.st);
      b.cond = block_cond[i].fwd(store, a.emb);
      const int c = b.pre.shape[0];
      b.scaled = b.normed;
      const std::size_t plane = b.scaled.size() / c;
      for (int ci = 0; ci < c; ++ci) {
        const T gamma = T(1) + b.cond[ci];
        const T beta = b.cond[c + ci];
        T* p = b.scaled.data() + ci * plane;
        for (std::size_t j = 0; j < plane; ++j) p[j] = p[j] * gamma + beta;
      }
      b.act = nn::lrelu_forward(b.scaled, T(0.2));
      x = &b.act;
    }
    a.rgb_pre = to_rgb.fwd(store, *x);
    a.img = nn::sigmoid_forward(a.rgb_pre);
    return a.img;
  }

  // dimg: gradient at the sigmoid output. Parameter grads go to `g` (null to
  // keep the net frozen); dz receives the latent gradient when non-null.
  // dact_extra, when non-null, holds per-block additive gradients flowing
  // into the pyramid activations (the mask branch hooks in there).
  void backward(const Tensor<T>& dimg, ClassLabel cls, const Acts& a, T* g, std::vector<T>* dz,
                const std::vector<Tensor<T>>* dact_extra = nullptr) const {
    const int L = static_cast<int>(block_conv.size());
    std::vector<T> demb(cfg.emb_dim, T(0));

    Tensor<T> dpre_rgb = nn::sigmoid_backward(a.img, dimg);
    Tensor<T> dact = to_rgb.bwd(store, a.blocks[L - 1].act, dpre_rgb, g);

    for (int i = L - 1; i >= 0; --i) {
      const auto& b = a.blocks[i];
      if (dact_extra && !(*dact_extra)[i].empty()) {
        const auto& extra = (*dact_extra)[i];
        for (std::size_t j = 0; j < dact.size(); ++j) dact.v[j] += extra.v[j];
      }
      Tensor<T> dscaled = nn::lrelu_backward(b.scaled, dact, T(0.2));
      const int c = b.pre.shape[0];
      const std::size_t plane = dscaled.size() / c;
      std::vector<T> dcond(2 * c, T(0));
      Tensor<T> dnormed = dscaled;
      for (int ci = 0; ci < c; ++ci) {
        const T gamma = T(1) + b.cond[ci];
        const T* ds = dscaled.data() + ci * plane;
        const T* nm = b.normed.data() + ci * plane;
        T* dn = dnormed.data() + ci * plane;
        T dgamma = 0, dbeta = 0;
        for (std::size_t j = 0; j < plane; ++j) {
          dgamma += ds[j] * nm[j];
          dbeta += ds[j];
          dn[j] = ds[j] * gamma;
        }
        dcond[ci] = dgamma;
        dcond[c + ci] = dbeta;
      }
      auto demb_part = block_cond[i].bwd(store, a.emb, dcond, g);
      for (int j = 0; j < cfg.emb_dim; ++j) demb[j] += demb_part[j];
      Tensor<T> dpre = nn::spatial_norm_backward(b.pre, b.st, dnormed);
      Tensor<T> dup = block_conv[i].bwd(store, b.up, dpre, g);
      dact = nn::upsample_nearest2x_backward(i == 0 ? a.stem_map.shape : a.blocks[i - 1].act.shape,
                                             dup);
    }

    std::vector<T> dstem(dact.v.begin(), dact.v.end());
    auto dzin = stem.bwd(store, a.zin, dstem, g);
    if (dz) dz->assign(dzin.begin(), dzin.begin() + cfg.latent_dim);
    for (int j = 0; j < cfg.emb_dim; ++j) demb[j] += dzin[cfg.latent_dim + j];
    if (g) cls_emb.bwd(store, cls, demb, g);
  }
};

// ---------------------------------------------------------------------------
// Strided conv trunk shared by the discriminators and the encoder.

template <class T>
struct ConvTrunk {
  std::vector<nn::Conv<T>> convs;
  int out_ch = 0, out_hw = 4;

  ConvTrunk() = default;
  ConvTrunk(nn::ParamStore<T>& st, const std::string& name, int img_size, int in_ch, int base,
            int max_ch, Rng& rng) {
    int cin = in_ch, s = img_size, i = 0;
    while (s > 4) {
      const int cout = std::min(base << i, max_ch);
      convs.emplace_back(st, name + ".conv" + std::to_string(i), cin, cout, 3, 2, 1, rng);
      cin = cout;
      s /= 2;
      ++i;
    }
    out_ch = cin;
    out_hw = s;
  }

  struct Acts {
    std::vector<Tensor<T>> pre;   // conv outputs
    std::vector<Tensor<T>> in;    // conv inputs (post-activation of previous)
  };

  Tensor<T> forward(const nn::ParamStore<T>& st, const Tensor<T>& x, Acts& a) const {
    a.pre.clear();
    a.in.clear();
    Tensor<T> cur = x;
    for (const auto& conv : convs) {
      a.in.push_back(cur);
      Tensor<T> pre = conv.fwd(st, cur);
      a.pre.push_back(pre);
      cur = nn::lrelu_forward(pre, T(0.2));
    }
    return cur;
  }

  Tensor<T> backward(const nn::ParamStore<T>& st, const Tensor<T>& dy, const Acts& a, T* g,
                     bool need_dx) const {
    Tensor<T> d = dy;
    for (int i = static_cast<int>(convs.size()) - 1; i >= 0; --i) {
      Tensor<T> dpre = nn::lrelu_backward(a.pre[i], d, T(0.2));
      d = convs[i].bwd(st, a.in[i], dpre, g, need_dx || i > 0);
    }
    return d;
  }
};

struct DiscConfig {
  int img_size = 64;
  int class_count = 8;
  int emb_dim = 16;
  int base_channels = 12;
  int max_channels = 64;

  std::string arch_string() const {
    return "disc:v1:size=" + std::to_string(img_size) + ":K=" + std::to_string(class_count) +
           ":emb=" + std::to_string(emb_dim) + ":base=" + std::to_string(base_channels);
  }
};

template <class T>
struct ReconDiscriminator {
  DiscConfig cfg;
  nn::ParamStore<T> store;
  ConvTrunk<T> trunk;
  nn::Embedding<T> cls_emb;
  nn::Linear<T> head;  // pooled features -> logit
  nn::Linear<T> proj;  // class embedding -> feature space
  bool trained = false;

  ReconDiscriminator() = default;
  ReconDiscriminator(const DiscConfig& c, std::uint64_t init_seed) : cfg(c) {
    Rng rng(derive_seed(init_seed, {0xD15Cull}));
    trunk = ConvTrunk<T>(store, "trunk", cfg.img_size, 3, cfg.base_channels, cfg.max_channels, rng);
    cls_emb = nn::Embedding<T>(store, "cls_emb", cfg.class_count, cfg.emb_dim, rng);
    head = nn::Linear<T>(store, "head", trunk.out_ch, 1, rng);
    proj = nn::Linear<T>(store, "proj", cfg.emb_dim, trunk.out_ch, rng, 0.1);
  }

  struct Acts {
    typename ConvTrunk<T>::Acts trunk;
    Tensor<T> top;
    std::vector<T> feat, emb, projv;
  };

  T logit(const Tensor<T>& x, ClassLabel cls, Acts& a) const {
    require(x.shape.size() == 3 && x.shape[0] == 3 && x.shape[1] == cfg.img_size &&
                x.shape[2] == cfg.img_size,
            ErrKind::invalid_argument, "discriminator: input shape mismatch");
    require(cls >= 0 && cls < cfg.class_count, ErrKind::invalid_argument,
            "discriminator: class label out of range");
    a.top = trunk.forward(store, x, a.trunk);
    a.feat = nn::gap_forward(a.top);
    a.emb = cls_emb.fwd(store, cls);
    a.projv = proj.fwd(store, a.emb);
    T out = head.fwd(store, a.feat)[0];
    for (int i = 0; i < trunk.out_ch; ++i) out += a.projv[i] * a.feat[i];
    return out;
  }

  // Returns d(input) when need_dx; parameter grads accumulate into g.
  Tensor<T> backward(T dlogit, ClassLabel cls, const Acts& a, T* g, bool need_dx) const {
    std::vector<T> dfeat(trunk.out_ch, T(0));
    std::vector<T> dprojv(trunk.out_ch, T(0));
    for (int i = 0; i < trunk.out_ch; ++i) {
      dfeat[i] = dlogit * a.projv[i];
      dprojv[i] = dlogit * a.feat[i];
    }
    auto dfeat_head = head.bwd(store, a.feat, {dlogit}, g);
    for (int i = 0; i < trunk.out_ch; ++i) dfeat[i] += dfeat_head[i];
    auto demb = proj.bwd(store, a.emb, dprojv, g);
    if (g) cls_emb.bwd(store, cls, demb, g);
    Tensor<T> dtop = nn::gap_backward(a.top.shape, dfeat);
    return trunk.backward(store, dtop, a.trunk, g, need_dx);
  }
};

// ---------------------------------------------------------------------------
// Latent sampling with the truncation trick (resampled, not clamped).

inline LatentCode sample_latent(std::uint64_t seed, double lambda, int dim = 64) {
  require(lambda > 0.0, ErrKind::invalid_argument, "sample_latent: lambda must be > 0");
  Rng rng(derive_seed(seed, {0x7A7E47ull}));
  LatentCode z;
  z.embedded = false;
  z.v.resize(dim);
  for (int i = 0; i < dim; ++i) {
    double v = rng.normal();
    int guard = 0;
    while (std::fabs(v) > lambda && ++guard < 10000) v = rng.normal();
    if (std::fabs(v) > lambda) v = (rng.uniform() * 2.0 - 1.0) * lambda;
    z.v[i] = static_cast<float>(v);
  }
  return z;
}

// ---------------------------------------------------------------------------
// Inference helpers (float instantiation)

inline std::pair<Image, FeaturePyramid> generate(const Generator<float>& g, const LatentCode& z,
                                                 ClassLabel cls) {
  typename Generator<float>::Acts acts;
  const auto& img_t = g.forward(z.v, cls, acts);
  Image img(g.cfg.img_size, g.cfg.img_size);
  img.v = img_t.v;
  FeaturePyramid pyr;
  for (const auto& b : acts.blocks) pyr.levels.push_back(b.act);
  return {std::move(img), std::move(pyr)};
}

inline double discriminate_real(const ReconDiscriminator<float>& d, const Image& x,
                                ClassLabel cls) {
  typename ReconDiscriminator<float>::Acts acts;
  const float logit = d.logit(x.tensor(), cls, acts);
  return nn::clamp_prob(nn::sigmoid_s(static_cast<double>(logit)));
}

// ---------------------------------------------------------------------------
// Conditional GAN training (non-saturating logistic loss, Adam, deterministic
// per-sample gradient batching).

struct GanTrainConfig {
  int epochs = 60;
  int batch = 16;
  double lr_g = 2e-4, lr_d = 2e-4;
  double beta1 = 0.5, beta2 = 0.999;
  int threads = 1;
};

struct GanTrainResult {
  Generator<float> g;
  ReconDiscriminator<float> d;
  TrainLog log;
};

inline GanTrainResult train_generator(const Corpus& corpus, int epochs, std::uint64_t seed,
                                      GeneratorConfig gcfg = {}, GanTrainConfig tcfg = {}) {
  require(!corpus.entries.empty(), ErrKind::empty_input, "train_generator: empty corpus");
  require(epochs >= 1, ErrKind::invalid_argument, "train_generator: epochs must be >= 1");
  tcfg.epochs = epochs;
  gcfg.img_size = corpus.img_size;
  gcfg.class_count = std::max(gcfg.class_count, corpus.class_count);

  GanTrainResult r{Generator<float>(gcfg, derive_seed(seed, {1})),
                   ReconDiscriminator<float>(
                       DiscConfig{gcfg.img_size, gcfg.class_count, gcfg.emb_dim, 12, 64},
                       derive_seed(seed, {2})),
                   {}};
  auto train = corpus.split(false);
  if (train.empty()) train = corpus.split(true);

  nn::Adam<float> opt_g(tcfg.lr_g, tcfg.beta1, tcfg.beta2);
  nn::Adam<float> opt_d(tcfg.lr_d, tcfg.beta1, tcfg.beta2);
  Rng rng(derive_seed(seed, {3}));

  std::vector<int> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  nn::BatchGrads<float> grads;
  for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
    rng.shuffle(order);
    double ep_dloss = 0, ep_gloss = 0, ep_real = 0, ep_fake = 0;
    int nbatches = 0;
    for (std::size_t start = 0; start < order.size(); start += tcfg.batch) {
      const int bs = static_cast<int>(std::min<std::size_t>(tcfg.batch, order.size() - start));

      // --- discriminator step
      std::vector<std::vector<float>> zs(bs);
      std::vector<ClassLabel> cls(bs);
      for (int i = 0; i < bs; ++i) {
        zs[i].resize(gcfg.latent_dim);
        for (auto& v : zs[i]) v = static_cast<float>(rng.normal());
        cls[i] = train[order[start + i]]->class_id;
      }
      grads.reset(bs, r.d.store.size());
      std::vector<double> d_loss(bs), p_real(bs), p_fake(bs);
      parallel_for(bs, tcfg.threads, [&](int i) {
        const auto* entry = train[order[start + i]];
        typename Generator<float>::Acts ga;
        const auto& fake = r.g.forward(zs[i], cls[i], ga);
        typename ReconDiscriminator<float>::Acts ar, af;
        const float lr_ = r.d.logit(entry->image.tensor(), entry->class_id, ar);
        const float lf = r.d.logit(fake, cls[i], af);
        d_loss[i] = nn::softplus_s(static_cast<double>(-lr_)) +
                    nn::softplus_s(static_cast<double>(lf));
        p_real[i] = nn::sigmoid_s(static_cast<double>(lr_));
        p_fake[i] = nn::sigmoid_s(static_cast<double>(lf));
        float* g = grads.slot(i).data();
        r.d.backward(static_cast<float>(-(1.0 - p_real[i])), entry->class_id, ar, g, false);
        r.d.backward(static_cast<float>(p_fake[i]), cls[i], af, g, false);
      });
      opt_d.step(r.d.store.w, grads.reduce_mean());
      for (int i = 0; i < bs; ++i) {
        ep_dloss += d_loss[i] / bs;
        ep_real += p_real[i] / bs;
        ep_fake += p_fake[i] / bs;
      }

      // --- generator step
      for (int i = 0; i < bs; ++i) {
        for (auto& v : zs[i]) v = static_cast<float>(rng.normal());
        cls[i] = static_cast<ClassLabel>(rng.uniform_int(0, gcfg.class_count - 1));
      }
      grads.reset(bs, r.g.store.size());
      std::vector<double> g_loss(bs);
      parallel_for(bs, tcfg.threads, [&](int i) {
        typename Generator<float>::Acts ga;
        const auto& fake = r.g.forward(zs[i], cls[i], ga);
        typename ReconDiscriminator<float>::Acts ad;
        const float lf = r.d.logit(fake, cls[i], ad);
        g_loss[i] = nn::softplus_s(static_cast<double>(-lf));
        const float dlogit = static_cast<float>(-(1.0 - nn::sigmoid_s(static_cast<double>(lf))));
        Tensor<float> dimg = r.d.backward(dlogit, cls[i], ad, nullptr, true);
        r.g.backward(dimg, cls[i], ga, grads.slot(i).data(), nullptr);
      });
      opt_g.step(r.g.store.w, grads.reduce_mean());
      for (int i = 0; i < bs; ++i) ep_gloss += g_loss[i] / bs;
      ++nbatches;
    }
    r.log.epochs.push_back({{"epoch", static_cast<double>(epoch)},
                            {"d_loss", ep_dloss / nbatches},
                            {"g_loss", ep_gloss / nbatches},
                            {"d_real", ep_real / nbatches},
                            {"d_fake", ep_fake / nbatches}});
  }
  r.g.trained = true;
  r.d.trained = true;
  return r;
}

// ---------------------------------------------------------------------------
// Checkpoint I/O (blob + JSON sidecar)

inline void save_generator(const fs::path& stem, const Generator<float>& g,
                           std::uint64_t train_seed) {
  nn::save_store(fs::path(stem.string() + ".bin"), g.store);
  nlohmann::json j{{"kind", "generator"},
                   {"arch_hash", hex64(fnv1a(g.cfg.arch_string()))},
                   {"img_size", g.cfg.img_size},
                   {"latent_dim", g.cfg.latent_dim},
                   {"class_count", g.cfg.class_count},
                   {"emb_dim", g.cfg.emb_dim},
                   {"base_channels", g.cfg.base_channels},
                   {"blocks", g.cfg.blocks()},
                   {"seed", train_seed},
                   {"trained", g.trained}};
  write_text_file(fs::path(stem.string() + ".json"), j.dump(1) + "\n");
}

inline Generator<float> load_generator(const fs::path& stem) {
  require(fs::exists(fs::path(stem.string() + ".json")), ErrKind::dependency,
          "missing generator checkpoint: " + stem.string() + ".json");
  const auto j = nlohmann::json::parse(read_text_file(fs::path(stem.string() + ".json")));
  GeneratorConfig cfg;
  cfg.img_size = j.at("img_size").get<int>();
  cfg.latent_dim = j.at("latent_dim").get<int>();
  cfg.class_count = j.at("class_count").get<int>();
  cfg.emb_dim = j.at("emb_dim").get<int>();
  cfg.base_channels = j.at("base_channels").get<int>();
  Generator<float> g(cfg, 0);
  require(j.at("arch_hash").get<std::string>() == hex64(fnv1a(cfg.arch_string())),
          ErrKind::corrupt_dataset, "generator arch hash mismatch: " + stem.string());
  nn::load_store(fs::path(stem.string() + ".bin"), g.store);
  g.trained = j.value("trained", true);
  return g;
}

inline void save_discriminator(const fs::path& stem, const ReconDiscriminator<float>& d,
                               std::uint64_t train_seed) {
  nn::save_store(fs::path(stem.string() + ".bin"), d.store);
  nlohmann::json j{{"kind", "recon_discriminator"},
                   {"arch_hash", hex64(fnv1a(d.cfg.arch_string()))},
                   {"img_size", d.cfg.img_size},
                   {"class_count", d.cfg.class_count},
                   {"emb_dim", d.cfg.emb_dim},
                   {"base_channels", d.cfg.base_channels},
                   {"max_channels", d.cfg.max_channels},
                   {"seed", train_seed},
                   {"trained", d.trained}};
  write_text_file(fs::path(stem.string() + ".json"), j.dump(1) + "\n");
}

inline ReconDiscriminator<float> load_discriminator(const fs::path& stem) {
  require(fs::exists(fs::path(stem.string() + ".json")), ErrKind::dependency,
          "missing discriminator checkpoint: " + stem.string() + ".json");
  const auto j = nlohmann::json::parse(read_text_file(fs::path(stem.string() + ".json")));
  DiscConfig cfg;
  cfg.img_size = j.at("img_size").get<int>();
  cfg.class_count = j.at("class_count").get<int>();
  cfg.emb_dim = j.at("emb_dim").get<int>();
  cfg.base_channels = j.at("base_channels").get<int>();
  cfg.max_channels = j.at("max_channels").get<int>();
  ReconDiscriminator<float> d(cfg, 0);
  nn::load_store(fs::path(stem.string() + ".bin"), d.store);
  d.trained = j.value("trained", true);
  return d;
}

}  // namespace sodgan
