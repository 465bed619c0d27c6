#pragma once

// Embedding network: a strided conv encoder E(x, c) -> z+ in the generator's
// latent space, plus a latent-space denoiser eps_hat(z_t, t). Training
// combines (a) reconstruction through the frozen generator (pixel L1 and the
// adversarial term against D_r), (b) a diffusion prior on the latent via the
// single-t epsilon-prediction surrogate of the variational bound, and (c) a
// latent-regression warm start on generated pairs. The same encoder trunk
// doubles as the plain Gaussian-prior (VAE) baseline for the ablation.

#include <functional>
#include <optional>
#include <type_traits>

#include "sodgan/den/schedule.hpp"
#include "sodgan/gan/generator.hpp"

namespace sodgan {

struct EmbedConfig {
  int img_size = 64;
  int latent_dim = 64;
  int class_count = 8;
  int emb_dim = 16;
  int base_channels = 12;
  int max_channels = 64;
  int denoiser_hidden = 128;
  int time_feat = 16;
  bool vae = false;  // adds a log-variance head; embed() keeps returning the mean

  std::string arch_string() const {
    return std::string("den:v1:size=") + std::to_string(img_size) +
           ":d=" + std::to_string(latent_dim) + ":K=" + std::to_string(class_count) +
           ":emb=" + std::to_string(emb_dim) + ":base=" + std::to_string(base_channels) +
           ":hid=" + std::to_string(denoiser_hidden) + (vae ? ":vae" : "");
  }
};

inline std::vector<float> time_features_f(int t, int T, int dims) {
  std::vector<float> f(dims);
  const double tau = static_cast<double>(t) / std::max(1, T);
  for (int j = 0; j < dims / 2; ++j) {
    const double ang = std::ldexp(3.14159265358979323846 * tau, j);
    f[2 * j] = static_cast<float>(std::sin(ang));
    f[2 * j + 1] = static_cast<float>(std::cos(ang));
  }
  return f;
}

template <class T>
struct EmbeddingNet {
  EmbedConfig cfg;
  nn::ParamStore<T> store;
  ConvTrunk<T> trunk;
  nn::Embedding<T> cls_emb;
  nn::Linear<T> to_latent;       // [flattened 4x4 top ; class emb] -> d
  nn::Linear<T> to_logvar;       // VAE head (only when cfg.vae)
  nn::Linear<T> dn1, dn2, dn3;   // denoiser MLP
  bool trained = false;

  EmbeddingNet() = default;
  EmbeddingNet(const EmbedConfig& c, std::uint64_t init_seed) : cfg(c) {
    Rng rng(derive_seed(init_seed, {0xE4Bull}));
    trunk = ConvTrunk<T>(store, "trunk", cfg.img_size, 3, cfg.base_channels, cfg.max_channels, rng);
    cls_emb = nn::Embedding<T>(store, "cls_emb", cfg.class_count, cfg.emb_dim, rng);
    const int flat = trunk.out_ch * trunk.out_hw * trunk.out_hw;
    to_latent = nn::Linear<T>(store, "to_latent", flat + cfg.emb_dim, cfg.latent_dim, rng);
    if (cfg.vae) to_logvar = nn::Linear<T>(store, "to_logvar", flat + cfg.emb_dim, cfg.latent_dim, rng, 0.01);
    const int din = cfg.latent_dim + cfg.time_feat;
    dn1 = nn::Linear<T>(store, "dn1", din, cfg.denoiser_hidden, rng);
    dn2 = nn::Linear<T>(store, "dn2", cfg.denoiser_hidden, cfg.denoiser_hidden, rng);
    dn3 = nn::Linear<T>(store, "dn3", cfg.denoiser_hidden, cfg.latent_dim, rng, 0.1);
  }

  struct Acts {
    typename ConvTrunk<T>::Acts trunk;
    Tensor<T> top;
    std::vector<T> flat, emb, z;
  };

  std::vector<T> embed(const Tensor<T>& x, ClassLabel cls, Acts& a) const {
    require(x.shape.size() == 3 && x.shape[0] == 3 && x.shape[1] == cfg.img_size &&
                x.shape[2] == cfg.img_size,
            ErrKind::invalid_argument, "embed: input shape mismatch");
    require(cls >= 0 && cls < cfg.class_count, ErrKind::invalid_argument,
            "embed: class label out of range");
    a.top = trunk.forward(store, x, a.trunk);
    a.flat.assign(a.top.v.begin(), a.top.v.end());
    a.emb = cls_emb.fwd(store, cls);
    a.flat.insert(a.flat.end(), a.emb.begin(), a.emb.end());
    a.z = to_latent.fwd(store, a.flat);
    return a.z;
  }

  std::vector<T> logvar_head(const Acts& a) const { return to_logvar.fwd(store, a.flat); }

  void embed_backward(const std::vector<T>& dz, ClassLabel cls, const Acts& a, T* g,
                      const std::vector<T>* dlogvar = nullptr) const {
    auto dflat = to_latent.bwd(store, a.flat, dz, g);
    if (dlogvar) {
      auto dflat2 = to_logvar.bwd(store, a.flat, *dlogvar, g);
      for (std::size_t i = 0; i < dflat.size(); ++i) dflat[i] += dflat2[i];
    }
    const int flat_n = trunk.out_ch * trunk.out_hw * trunk.out_hw;
    if (g) {
      std::vector<T> demb(dflat.begin() + flat_n, dflat.end());
      cls_emb.bwd(store, cls, demb, g);
    }
    Tensor<T> dtop(a.top.shape, std::vector<T>(dflat.begin(), dflat.begin() + flat_n));
    trunk.backward(store, dtop, a.trunk, g, false);
  }

  struct DenAct {
    std::vector<T> in, h1pre, h1, h2pre, h2, out;
  };

  std::vector<T> denoise(const std::vector<T>& z_t, int t, int sched_T, DenAct& a) const {
    require(static_cast<int>(z_t.size()) == cfg.latent_dim, ErrKind::invalid_argument,
            "denoise: latent dimension mismatch");
    a.in = z_t;
    const auto tf = time_features_f(t, sched_T, cfg.time_feat);
    for (float v : tf) a.in.push_back(static_cast<T>(v));
    a.h1pre = dn1.fwd(store, a.in);
    a.h1 = a.h1pre;
    for (auto& v : a.h1) v = v > T(0) ? v : T(0);
    a.h2pre = dn2.fwd(store, a.h1);
    a.h2 = a.h2pre;
    for (auto& v : a.h2) v = v > T(0) ? v : T(0);
    a.out = dn3.fwd(store, a.h2);
    return a.out;
  }

  // Returns d(z_t); parameter grads accumulate into g.
  std::vector<T> denoise_backward(const std::vector<T>& dout, const DenAct& a, T* g) const {
    auto dh2 = dn3.bwd(store, a.h2, dout, g);
    for (std::size_t i = 0; i < dh2.size(); ++i)
      if (a.h2pre[i] <= T(0)) dh2[i] = T(0);
    auto dh1 = dn2.bwd(store, a.h1, dh2, g);
    for (std::size_t i = 0; i < dh1.size(); ++i)
      if (a.h1pre[i] <= T(0)) dh1[i] = T(0);
    auto din = dn1.bwd(store, a.in, dh1, g);
    return std::vector<T>(din.begin(), din.begin() + cfg.latent_dim);
  }
};

// ---------------------------------------------------------------------------
// Variational surrogate: || eps - eps_hat(q_sample(z0, t, eps), t) ||^2.
// Gradients flow into the denoiser parameters (scale 1) and, when dz0 is
// non-null, into z0 through the closed-form noising.

template <class T>
double variational_surrogate(const EmbeddingNet<T>& net, const std::vector<T>& z0, int t,
                             const std::vector<T>& eps, const DiffusionSchedule& sched,
                             std::type_identity_t<T>* g = nullptr,
                             std::vector<std::type_identity_t<T>>* dz0 = nullptr) {
  const auto z_t = q_sample(z0, t, sched, eps);
  typename EmbeddingNet<T>::DenAct da;
  const auto eps_hat = net.denoise(z_t, t, sched.T, da);
  double loss = 0;
  std::vector<T> dout(eps.size());
  for (std::size_t i = 0; i < eps.size(); ++i) {
    const double r = static_cast<double>(eps_hat[i]) - static_cast<double>(eps[i]);
    loss += r * r;
    dout[i] = static_cast<T>(2.0 * r);
  }
  if (g || dz0) {
    auto dz_t = net.denoise_backward(dout, da, g);
    if (dz0) {
      const T a = static_cast<T>(std::sqrt(sched.alpha_bar_at(t)));
      dz0->assign(dz_t.size(), T(0));
      for (std::size_t i = 0; i < dz_t.size(); ++i) (*dz0)[i] = a * dz_t[i];
    }
  }
  return loss;
}

// Public op: single-t Monte-Carlo estimate with internally drawn (t, eps).
template <class T>
double loss_variational(const std::vector<T>& z0, const EmbeddingNet<T>& net,
                        const DiffusionSchedule& sched, std::uint64_t seed) {
  Rng rng(derive_seed(seed, {0x1055ull}));
  const int t = static_cast<int>(rng.uniform_int(1, sched.T));
  std::vector<T> eps(z0.size());
  for (auto& v : eps) v = static_cast<T>(rng.normal());
  return variational_surrogate(net, z0, t, eps, sched, nullptr, nullptr);
}

// ---------------------------------------------------------------------------
// Adversarial reconstruction objective (reconstructions vs real images):
//   d_r side: -[log D_r(x) + log(1 - D_r(G(E(x,c),c)))]
//   den side: -log D_r(G(E(x,c),c))        (non-saturating)

template <class T>
std::pair<double, double> loss_adversarial_recon(
    const EmbeddingNet<T>& den, const Generator<T>& g, const ReconDiscriminator<T>& d_r,
    const std::vector<std::pair<const Image*, ClassLabel>>& batch) {
  require(g.trained, ErrKind::invalid_argument, "loss_adversarial_recon: generator not trained");
  require(!batch.empty(), ErrKind::empty_input, "loss_adversarial_recon: empty batch");
  double dr_loss = 0, den_loss = 0;
  for (const auto& [img, cls] : batch) {
    Tensor<T> x({3, img->h, img->w});
    for (std::size_t i = 0; i < x.size(); ++i) x.v[i] = static_cast<T>(img->v[i]);
    typename EmbeddingNet<T>::Acts ea;
    const auto z = den.embed(x, cls, ea);
    typename Generator<T>::Acts ga;
    const auto& recon = g.forward(z, cls, ga);
    typename ReconDiscriminator<T>::Acts ar, af;
    const double p_real =
        nn::clamp_prob(nn::sigmoid_s(static_cast<double>(d_r.logit(x, cls, ar))));
    const double p_fake =
        nn::clamp_prob(nn::sigmoid_s(static_cast<double>(d_r.logit(recon, cls, af))));
    dr_loss += -(std::log(p_real) + std::log(1.0 - p_fake));
    den_loss += -std::log(p_fake);
  }
  return {dr_loss / batch.size(), den_loss / batch.size()};
}

// Gradient of the den-side loss w.r.t. the embedding net parameters, for one
// sample. Returns the loss; used by training and by the gradient-check suite.
template <class T>
double den_adversarial_grad(const EmbeddingNet<T>& den, const Generator<T>& g,
                            const ReconDiscriminator<T>& d_r, const Tensor<T>& x, ClassLabel cls,
                            T* gden) {
  typename EmbeddingNet<T>::Acts ea;
  const auto z = den.embed(x, cls, ea);
  typename Generator<T>::Acts ga;
  const auto& recon = g.forward(z, cls, ga);
  typename ReconDiscriminator<T>::Acts af;
  const T logit = d_r.logit(recon, cls, af);
  const double p = nn::clamp_prob(nn::sigmoid_s(static_cast<double>(logit)));
  const double loss = -std::log(p);
  const T dlogit = static_cast<T>(-(1.0 - p));
  Tensor<T> dimg = d_r.backward(dlogit, cls, af, nullptr, true);
  std::vector<T> dz;
  g.backward(dimg, cls, ga, nullptr, &dz);
  den.embed_backward(dz, cls, ea, gden);
  return loss;
}

// ---------------------------------------------------------------------------
// Few-shot set: one embedded (z+, mask) pair per class.

struct FewShotPair {
  LatentCode z;
  Mask y;
  Image image;  // the real source image (the discriminator's "real" pair)
  ClassLabel c = 0;
  int source_id = 0;
};

struct FewShotSet {
  std::vector<FewShotPair> pairs;
};

inline FewShotSet build_fewshot_set(const Corpus& corpus, const EmbeddingNet<float>& den,
                                    std::uint64_t seed) {
  require(den.trained, ErrKind::invalid_argument, "build_fewshot_set: embedding net not trained");
  FewShotSet fs;
  Rng rng(derive_seed(seed, {0xF5ull}));
  for (int cls = 0; cls < corpus.class_count; ++cls) {
    std::vector<const CorpusEntry*> candidates;
    for (const auto& e : corpus.entries)
      if (e.class_id == cls && !e.is_test) candidates.push_back(&e);
    require(!candidates.empty(), ErrKind::missing_class,
            "build_fewshot_set: no training entries for class " + std::to_string(cls));
    const auto* pick = candidates[rng.uniform_int(0, static_cast<std::int64_t>(candidates.size()) - 1)];
    typename EmbeddingNet<float>::Acts ea;
    FewShotPair p;
    p.z.v = den.embed(pick->image.tensor(), cls, ea);
    p.z.embedded = true;
    p.y = pick->mask;
    p.image = pick->image;
    p.c = cls;
    p.source_id = pick->id;
    fs.pairs.push_back(std::move(p));
  }
  return fs;
}

inline void save_fewshot(const FewShotSet& fs, const fs::path& path, const fs::path& corpus_dir) {
  std::string jsonl;
  for (const auto& p : fs.pairs) {
    const std::string fid = entry_file_id(p.source_id);
    nlohmann::json rec{{"class", p.c},
                       {"source_id", p.source_id},
                       {"latent", p.z.v},
                       {"image_path", (corpus_dir / "images" / (fid + ".png")).string()},
                       {"mask_path", (corpus_dir / "masks" / (fid + ".png")).string()}};
    jsonl += rec.dump() + "\n";
  }
  write_text_file(path, jsonl);
}

inline FewShotSet load_fewshot(const fs::path& path) {
  require(fs::exists(path), ErrKind::dependency, "few-shot set not found: " + path.string());
  FewShotSet fs;
  std::istringstream in(read_text_file(path));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto rec = nlohmann::json::parse(line);
    FewShotPair p;
    p.c = rec.at("class").get<int>();
    p.source_id = rec.at("source_id").get<int>();
    p.z.v = rec.at("latent").get<std::vector<float>>();
    p.z.embedded = true;
    p.y = load_mask_png(rec.at("mask_path").get<std::string>(), /*binarize=*/true);
    p.image = load_image_png(rec.at("image_path").get<std::string>());
    fs.pairs.push_back(std::move(p));
  }
  require(!fs.pairs.empty(), ErrKind::corrupt_dataset, "few-shot set empty: " + path.string());
  return fs;
}

// ---------------------------------------------------------------------------
// Training

struct DenTrainConfig {
  int warmup_steps = 400;
  int batch = 16;
  double lr = 1e-3;
  double dr_lr = 1e-4;
  double w_pixel = 1.0;
  double w_adv = 0.05;
  double w_prior = 0.05;  // encoder-side weight of the diffusion prior
  int eval_cap = 64;      // held-out images used for the per-epoch recon log
  int threads = 1;
};

struct DenTrainResult {
  EmbeddingNet<float> den;
  TrainLog log;
};

namespace detail {

inline double mean_recon_l1(const EmbeddingNet<float>& den, const Generator<float>& g,
                            const std::vector<const CorpusEntry*>& entries, int cap, int threads) {
  const int n = std::min<int>(cap, static_cast<int>(entries.size()));
  if (n == 0) return 0.0;
  std::vector<double> errs(n, 0.0);
  parallel_for(n, threads, [&](int i) {
    typename EmbeddingNet<float>::Acts ea;
    const auto x = entries[i]->image.tensor();
    const auto z = den.embed(x, entries[i]->class_id, ea);
    typename Generator<float>::Acts ga;
    const auto& recon = g.forward(z, entries[i]->class_id, ga);
    double s = 0;
    for (std::size_t j = 0; j < x.size(); ++j)
      s += std::fabs(static_cast<double>(recon.v[j]) - static_cast<double>(x.v[j]));
    errs[i] = s / static_cast<double>(x.size());
  });
  double m = 0;
  for (double e : errs) m += e;
  return m / n;
}

}  // namespace detail

inline DenTrainResult train_den(const Corpus& corpus, const Generator<float>& g,
                                ReconDiscriminator<float>& d_r, const DiffusionSchedule& sched,
                                int epochs, std::uint64_t seed, DenTrainConfig cfg = {}) {
  require(!corpus.entries.empty(), ErrKind::empty_input, "train_den: empty corpus");
  require(epochs >= 1, ErrKind::invalid_argument, "train_den: epochs must be >= 1");
  require(g.trained, ErrKind::invalid_argument, "train_den: generator not trained");

  EmbedConfig ecfg;
  ecfg.img_size = g.cfg.img_size;
  ecfg.latent_dim = g.cfg.latent_dim;
  ecfg.class_count = g.cfg.class_count;
  DenTrainResult r{EmbeddingNet<float>(ecfg, derive_seed(seed, {1})), {}};

  auto train = corpus.split(false);
  if (train.empty()) train = corpus.split(true);
  auto held = corpus.split(true);
  if (held.empty()) held = train;

  nn::Adam<float> opt(cfg.lr, 0.9, 0.999);
  nn::Adam<float> opt_dr(cfg.dr_lr, 0.5, 0.999);
  Rng rng(derive_seed(seed, {2}));
  nn::BatchGrads<float> grads;

  const double initial_l1 =
      detail::mean_recon_l1(r.den, g, held, cfg.eval_cap, cfg.threads);
  r.log.epochs.push_back({{"epoch", 0.0}, {"recon_l1", initial_l1}});

  // Warm start: regress E(G(z,c), c) back to z on generated pairs.
  const int d = ecfg.latent_dim;
  for (int step = 0; step < cfg.warmup_steps; ++step) {
    const int bs = cfg.batch;
    std::vector<std::vector<float>> zs(bs);
    std::vector<ClassLabel> cls(bs);
    for (int i = 0; i < bs; ++i) {
      zs[i].resize(d);
      for (auto& v : zs[i]) v = static_cast<float>(rng.normal());
      cls[i] = static_cast<ClassLabel>(rng.uniform_int(0, ecfg.class_count - 1));
    }
    grads.reset(bs, r.den.store.size());
    parallel_for(bs, cfg.threads, [&](int i) {
      typename Generator<float>::Acts ga;
      const auto& x = g.forward(zs[i], cls[i], ga);
      typename EmbeddingNet<float>::Acts ea;
      const auto zhat = r.den.embed(x, cls[i], ea);
      std::vector<float> dz(d);
      for (int j = 0; j < d; ++j) dz[j] = 2.f * (zhat[j] - zs[i][j]) / d;
      r.den.embed_backward(dz, cls[i], ea, grads.slot(i).data());
    });
    opt.step(r.den.store.w, grads.reduce_mean());
  }

  std::vector<int> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  nn::BatchGrads<float> dr_grads;
  for (int epoch = 1; epoch <= epochs; ++epoch) {
    rng.shuffle(order);
    double ep_pix = 0, ep_adv = 0, ep_prior = 0;
    int nb = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const int bs = static_cast<int>(std::min<std::size_t>(cfg.batch, order.size() - start));
      std::vector<int> ts(bs);
      std::vector<std::vector<float>> eps(bs);
      for (int i = 0; i < bs; ++i) {
        ts[i] = static_cast<int>(rng.uniform_int(1, sched.T));
        eps[i].resize(d);
        for (auto& v : eps[i]) v = static_cast<float>(rng.normal());
      }

      // D_r update on real vs reconstruction.
      dr_grads.reset(bs, d_r.store.size());
      parallel_for(bs, cfg.threads, [&](int i) {
        const auto* e = train[order[start + i]];
        const auto x = e->image.tensor();
        typename EmbeddingNet<float>::Acts ea;
        const auto z = r.den.embed(x, e->class_id, ea);
        typename Generator<float>::Acts ga;
        const auto& recon = g.forward(z, e->class_id, ga);
        typename ReconDiscriminator<float>::Acts ar, af;
        const float lr_ = d_r.logit(x, e->class_id, ar);
        const float lf = d_r.logit(recon, e->class_id, af);
        float* gb = dr_grads.slot(i).data();
        d_r.backward(static_cast<float>(-(1.0 - nn::sigmoid_s(static_cast<double>(lr_)))),
                     e->class_id, ar, gb, false);
        d_r.backward(static_cast<float>(nn::sigmoid_s(static_cast<double>(lf))), e->class_id, af,
                     gb, false);
      });
      opt_dr.step(d_r.store.w, dr_grads.reduce_mean());

      // Encoder + denoiser update.
      grads.reset(bs, r.den.store.size());
      std::vector<double> pix(bs), adv(bs), prior(bs);
      parallel_for(bs, cfg.threads, [&](int i) {
        const auto* e = train[order[start + i]];
        const auto x = e->image.tensor();
        typename EmbeddingNet<float>::Acts ea;
        const auto z = r.den.embed(x, e->class_id, ea);
        typename Generator<float>::Acts ga;
        const auto& recon = g.forward(z, e->class_id, ga);
        typename ReconDiscriminator<float>::Acts af;
        const float lf = d_r.logit(recon, e->class_id, af);
        const double pf = nn::clamp_prob(nn::sigmoid_s(static_cast<double>(lf)));
        adv[i] = -std::log(pf);

        const std::size_t npix = x.size();
        Tensor<float> dimg = zeros_like(recon);
        double l1 = 0;
        for (std::size_t j = 0; j < npix; ++j) {
          const double diff = static_cast<double>(recon.v[j]) - static_cast<double>(x.v[j]);
          l1 += std::fabs(diff);
          dimg.v[j] = static_cast<float>(cfg.w_pixel * (diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0)) /
                                         npix);
        }
        pix[i] = l1 / npix;
        Tensor<float> dimg_adv =
            d_r.backward(static_cast<float>(-(1.0 - pf)), e->class_id, af, nullptr, true);
        for (std::size_t j = 0; j < npix; ++j)
          dimg.v[j] += static_cast<float>(cfg.w_adv) * dimg_adv.v[j];

        std::vector<float> dz;
        g.backward(dimg, e->class_id, ga, nullptr, &dz);

        float* gb = grads.slot(i).data();
        std::vector<float> dz0;
        prior[i] = variational_surrogate(r.den, z, ts[i], eps[i], sched, gb, &dz0) / d;
        for (int j = 0; j < d; ++j) dz[j] += static_cast<float>(cfg.w_prior) * dz0[j] / d;
        r.den.embed_backward(dz, e->class_id, ea, gb);
      });
      opt.step(r.den.store.w, grads.reduce_mean());
      for (int i = 0; i < bs; ++i) {
        ep_pix += pix[i] / bs;
        ep_adv += adv[i] / bs;
        ep_prior += prior[i] / bs;
      }
      ++nb;
    }
    const double held_l1 = detail::mean_recon_l1(r.den, g, held, cfg.eval_cap, cfg.threads);
    r.log.epochs.push_back({{"epoch", static_cast<double>(epoch)},
                            {"pixel_l1", ep_pix / nb},
                            {"adv", ep_adv / nb},
                            {"prior", ep_prior / nb},
                            {"recon_l1", held_l1}});
  }
  r.den.trained = true;
  return r;
}

// Plain Gaussian-prior baseline: KL to the unit normal plus pixel-L1
// reconstruction through the frozen generator.
inline DenTrainResult train_vae_baseline(const Corpus& corpus, const Generator<float>& g,
                                         int epochs, std::uint64_t seed, DenTrainConfig cfg = {}) {
  require(!corpus.entries.empty(), ErrKind::empty_input, "train_vae: empty corpus");
  require(epochs >= 1, ErrKind::invalid_argument, "train_vae: epochs must be >= 1");
  require(g.trained, ErrKind::invalid_argument, "train_vae: generator not trained");

  EmbedConfig ecfg;
  ecfg.img_size = g.cfg.img_size;
  ecfg.latent_dim = g.cfg.latent_dim;
  ecfg.class_count = g.cfg.class_count;
  ecfg.vae = true;
  DenTrainResult r{EmbeddingNet<float>(ecfg, derive_seed(seed, {11})), {}};

  auto train = corpus.split(false);
  if (train.empty()) train = corpus.split(true);
  auto held = corpus.split(true);
  if (held.empty()) held = train;

  nn::Adam<float> opt(cfg.lr, 0.9, 0.999);
  Rng rng(derive_seed(seed, {12}));
  nn::BatchGrads<float> grads;
  const int d = ecfg.latent_dim;
  const double w_kl = 1e-3;

  r.log.epochs.push_back(
      {{"epoch", 0.0},
       {"recon_l1", detail::mean_recon_l1(r.den, g, held, cfg.eval_cap, cfg.threads)}});

  std::vector<int> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  for (int epoch = 1; epoch <= epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const int bs = static_cast<int>(std::min<std::size_t>(cfg.batch, order.size() - start));
      std::vector<std::vector<float>> eps(bs);
      for (int i = 0; i < bs; ++i) {
        eps[i].resize(d);
        for (auto& v : eps[i]) v = static_cast<float>(rng.normal());
      }
      grads.reset(bs, r.den.store.size());
      parallel_for(bs, cfg.threads, [&](int i) {
        const auto* e = train[order[start + i]];
        const auto x = e->image.tensor();
        typename EmbeddingNet<float>::Acts ea;
        const auto mu = r.den.embed(x, e->class_id, ea);
        const auto logvar = r.den.logvar_head(ea);
        std::vector<float> z(d);
        for (int j = 0; j < d; ++j)
          z[j] = mu[j] + std::exp(0.5f * logvar[j]) * eps[i][j];
        typename Generator<float>::Acts ga;
        const auto& recon = g.forward(z, e->class_id, ga);
        const std::size_t npix = x.size();
        Tensor<float> dimg = zeros_like(recon);
        for (std::size_t j = 0; j < npix; ++j) {
          const double diff = static_cast<double>(recon.v[j]) - static_cast<double>(x.v[j]);
          dimg.v[j] = static_cast<float>(cfg.w_pixel * (diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0)) /
                                         npix);
        }
        std::vector<float> dz;
        g.backward(dimg, e->class_id, ga, nullptr, &dz);
        // KL(q||N(0,1)) per-dim grads: dmu = mu, dlogvar = (exp(logvar)-1)/2.
        std::vector<float> dmu(d), dlv(d);
        for (int j = 0; j < d; ++j) {
          dmu[j] = dz[j] + static_cast<float>(w_kl) * mu[j];
          dlv[j] = dz[j] * 0.5f * std::exp(0.5f * logvar[j]) * eps[i][j] +
                   static_cast<float>(w_kl) * 0.5f * (std::exp(logvar[j]) - 1.f);
        }
        r.den.embed_backward(dmu, e->class_id, ea, grads.slot(i).data(), &dlv);
      });
      opt.step(r.den.store.w, grads.reduce_mean());
    }
    r.log.epochs.push_back(
        {{"epoch", static_cast<double>(epoch)},
         {"recon_l1", detail::mean_recon_l1(r.den, g, held, cfg.eval_cap, cfg.threads)}});
  }
  r.den.trained = true;
  return r;
}

// ---------------------------------------------------------------------------
// Checkpoint I/O

inline void save_embedding(const fs::path& stem, const EmbeddingNet<float>& e,
                           std::uint64_t train_seed) {
  nn::save_store(fs::path(stem.string() + ".bin"), e.store);
  nlohmann::json j{{"kind", e.cfg.vae ? "vae_encoder" : "diffusion_embedding"},
                   {"arch_hash", hex64(fnv1a(e.cfg.arch_string()))},
                   {"img_size", e.cfg.img_size},
                   {"latent_dim", e.cfg.latent_dim},
                   {"class_count", e.cfg.class_count},
                   {"emb_dim", e.cfg.emb_dim},
                   {"base_channels", e.cfg.base_channels},
                   {"max_channels", e.cfg.max_channels},
                   {"denoiser_hidden", e.cfg.denoiser_hidden},
                   {"vae", e.cfg.vae},
                   {"seed", train_seed},
                   {"trained", e.trained}};
  write_text_file(fs::path(stem.string() + ".json"), j.dump(1) + "\n");
}

inline EmbeddingNet<float> load_embedding(const fs::path& stem) {
  require(fs::exists(fs::path(stem.string() + ".json")), ErrKind::dependency,
          "missing embedding checkpoint: " + stem.string() + ".json");
  const auto j = nlohmann::json::parse(read_text_file(fs::path(stem.string() + ".json")));
  EmbedConfig cfg;
  cfg.img_size = j.at("img_size").get<int>();
  cfg.latent_dim = j.at("latent_dim").get<int>();
  cfg.class_count = j.at("class_count").get<int>();
  cfg.emb_dim = j.at("emb_dim").get<int>();
  cfg.base_channels = j.at("base_channels").get<int>();
  cfg.max_channels = j.at("max_channels").get<int>();
  cfg.denoiser_hidden = j.at("denoiser_hidden").get<int>();
  cfg.vae = j.at("vae").get<bool>();
  EmbeddingNet<float> e(cfg, 0);
  nn::load_store(fs::path(stem.string() + ".bin"), e.store);
  e.trained = j.value("trained", true);
  return e;
}

}  // namespace sodgan
