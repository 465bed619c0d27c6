#pragma once

// Downstream trainee: a small 3-level U-shaped encoder-decoder from the RGB
// image to a per-pixel saliency probability, trained with the same
// BCE + dice objective as the mask branch.

#include "sodgan/maskgen/maskgen.hpp"

namespace sodgan {

struct SaliencyConfig {
  int img_size = 64;
  int base = 16;  // encoder widths: base, 2*base, 4*base

  std::string arch_string() const {
    return "sod:v1:size=" + std::to_string(img_size) + ":base=" + std::to_string(base);
  }
};

template <class T>
struct SaliencyNet {
  SaliencyConfig cfg;
  nn::ParamStore<T> store;
  nn::Conv<T> enc1, down1, enc2, down2, bott;
  nn::Conv<T> up1_conv, merge1, up2_conv, merge2, out_conv;
  bool trained = false;

  SaliencyNet() = default;
  SaliencyNet(const SaliencyConfig& c, std::uint64_t init_seed) : cfg(c) {
    Rng rng(derive_seed(init_seed, {0x5A11ull}));
    const int b = cfg.base;
    enc1 = nn::Conv<T>(store, "enc1", 3, b, 3, 1, 1, rng);
    down1 = nn::Conv<T>(store, "down1", b, 2 * b, 3, 2, 1, rng);
    enc2 = nn::Conv<T>(store, "enc2", 2 * b, 2 * b, 3, 1, 1, rng);
    down2 = nn::Conv<T>(store, "down2", 2 * b, 4 * b, 3, 2, 1, rng);
    bott = nn::Conv<T>(store, "bott", 4 * b, 4 * b, 3, 1, 1, rng);
    up1_conv = nn::Conv<T>(store, "up1", 4 * b, 2 * b, 3, 1, 1, rng);
    merge1 = nn::Conv<T>(store, "merge1", 4 * b, 2 * b, 3, 1, 1, rng);
    up2_conv = nn::Conv<T>(store, "up2", 2 * b, b, 3, 1, 1, rng);
    merge2 = nn::Conv<T>(store, "merge2", 2 * b, b, 3, 1, 1, rng);
    out_conv = nn::Conv<T>(store, "out", b, 1, 3, 1, 1, rng);
  }

  struct Acts {
    Tensor<T> x;
    Tensor<T> e1p, e1, d1p, d1, e2p, e2, d2p, d2, bp, b;
    Tensor<T> u1up, u1p, u1, cat1, m1p, m1;
    Tensor<T> u2up, u2p, u2, cat2, m2p, m2;
    Tensor<T> outp, prob;
  };

  // Input (3,H,W) in [0,1]; output probability map (1,H,W).
  const Tensor<T>& forward(const Tensor<T>& x, Acts& a) const {
    require(x.shape.size() == 3 && x.shape[0] == 3 && x.shape[1] == cfg.img_size &&
                x.shape[2] == cfg.img_size,
            ErrKind::invalid_argument, "saliency net: input shape mismatch");
    const T slope = T(0.1);
    a.x = x;
    a.e1p = enc1.fwd(store, a.x);
    a.e1 = nn::lrelu_forward(a.e1p, slope);
    a.d1p = down1.fwd(store, a.e1);
    a.d1 = nn::lrelu_forward(a.d1p, slope);
    a.e2p = enc2.fwd(store, a.d1);
    a.e2 = nn::lrelu_forward(a.e2p, slope);
    a.d2p = down2.fwd(store, a.e2);
    a.d2 = nn::lrelu_forward(a.d2p, slope);
    a.bp = bott.fwd(store, a.d2);
    a.b = nn::lrelu_forward(a.bp, slope);

    a.u1up = nn::upsample_nearest2x_forward(a.b);
    a.u1p = up1_conv.fwd(store, a.u1up);
    a.u1 = nn::lrelu_forward(a.u1p, slope);
    a.cat1 = nn::concat_channels<T>({&a.u1, &a.e2});
    a.m1p = merge1.fwd(store, a.cat1);
    a.m1 = nn::lrelu_forward(a.m1p, slope);

    a.u2up = nn::upsample_nearest2x_forward(a.m1);
    a.u2p = up2_conv.fwd(store, a.u2up);
    a.u2 = nn::lrelu_forward(a.u2p, slope);
    a.cat2 = nn::concat_channels<T>({&a.u2, &a.e1});
    a.m2p = merge2.fwd(store, a.cat2);
    a.m2 = nn::lrelu_forward(a.m2p, slope);

    a.outp = out_conv.fwd(store, a.m2);
    a.prob = nn::sigmoid_forward(a.outp);
    return a.prob;
  }

  void backward(const Tensor<T>& dprob, const Acts& a, T* g) const {
    const T slope = T(0.1);
    Tensor<T> d = nn::sigmoid_backward(a.prob, dprob);
    d = out_conv.bwd(store, a.m2, d, g);
    d = nn::lrelu_backward(a.m2p, d, slope);
    d = merge2.bwd(store, a.cat2, d, g);
    auto parts2 = nn::split_channels(d, {cfg.base, cfg.base});
    Tensor<T> du2 = nn::lrelu_backward(a.u2p, parts2[0], slope);
    du2 = up2_conv.bwd(store, a.u2up, du2, g);
    Tensor<T> dm1 = nn::upsample_nearest2x_backward(a.m1.shape, du2);

    dm1 = nn::lrelu_backward(a.m1p, dm1, slope);
    dm1 = merge1.bwd(store, a.cat1, dm1, g);
    auto parts1 = nn::split_channels(dm1, {2 * cfg.base, 2 * cfg.base});
    Tensor<T> du1 = nn::lrelu_backward(a.u1p, parts1[0], slope);
    du1 = up1_conv.bwd(store, a.u1up, du1, g);
    Tensor<T> db = nn::upsample_nearest2x_backward(a.b.shape, du1);

    db = nn::lrelu_backward(a.bp, db, slope);
    db = bott.bwd(store, a.d2, db, g);
    db = nn::lrelu_backward(a.d2p, db, slope);
    Tensor<T> de2 = down2.bwd(store, a.e2, db, g);
    for (std::size_t i = 0; i < de2.size(); ++i) de2.v[i] += parts1[1].v[i];  // skip connection
    de2 = nn::lrelu_backward(a.e2p, de2, slope);
    Tensor<T> dd1 = enc2.bwd(store, a.d1, de2, g);
    dd1 = nn::lrelu_backward(a.d1p, dd1, slope);
    Tensor<T> de1 = down1.bwd(store, a.e1, dd1, g);
    for (std::size_t i = 0; i < de1.size(); ++i) de1.v[i] += parts2[1].v[i];  // skip connection
    de1 = nn::lrelu_backward(a.e1p, de1, slope);
    enc1.bwd(store, a.x, de1, g, /*need_dx=*/false);
  }
};

inline Mask predict_saliency(const SaliencyNet<float>& net, const Image& img) {
  typename SaliencyNet<float>::Acts a;
  const auto& prob = net.forward(img.tensor(), a);
  Mask m(img.h, img.w, false);
  m.v = prob.v;
  return m;
}

// ---------------------------------------------------------------------------
// Training on any (image, binary-mask) view.

struct SaliencyTrainConfig {
  int batch = 8;
  double lr = 2e-3;
  int threads = 1;
  int base = 16;
};

struct SaliencyTrainResult {
  SaliencyNet<float> net;
  TrainLog log;
};

inline SaliencyTrainResult train_saliency(
    const std::vector<std::pair<const Image*, const Mask*>>& data, int epochs, std::uint64_t seed,
    SaliencyTrainConfig cfg = {}) {
  require(!data.empty(), ErrKind::empty_input, "train_saliency: empty dataset");
  require(epochs >= 1, ErrKind::invalid_argument, "train_saliency: epochs must be >= 1");
  SaliencyConfig ncfg;
  ncfg.img_size = data[0].first->h;
  ncfg.base = cfg.base;
  SaliencyTrainResult r{SaliencyNet<float>(ncfg, derive_seed(seed, {1})), {}};

  nn::Adam<float> opt(cfg.lr, 0.9, 0.999);
  Rng rng(derive_seed(seed, {2}));
  nn::BatchGrads<float> grads;
  std::vector<int> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  for (int epoch = 0; epoch < epochs; ++epoch) {
    rng.shuffle(order);
    double ep_loss = 0;
    int nb = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const int bs = static_cast<int>(std::min<std::size_t>(cfg.batch, order.size() - start));
      grads.reset(bs, r.net.store.size());
      std::vector<double> loss(bs);
      parallel_for(bs, cfg.threads, [&](int i) {
        const auto& [img, mask] = data[order[start + i]];
        typename SaliencyNet<float>::Acts a;
        const auto& prob = r.net.forward(img->tensor(), a);
        Tensor<float> prob_hw({prob.shape[1], prob.shape[2]}, prob.v);
        Tensor<float> dprob_hw;
        loss[i] = loss_supervised(prob_hw, *mask, &dprob_hw);
        Tensor<float> dprob({1, prob.shape[1], prob.shape[2]}, dprob_hw.v);
        r.net.backward(dprob, a, grads.slot(i).data());
      });
      opt.step(r.net.store.w, grads.reduce_mean());
      for (int i = 0; i < bs; ++i) ep_loss += loss[i] / bs;
      ++nb;
    }
    r.log.epochs.push_back(
        {{"epoch", static_cast<double>(epoch)}, {"loss_s", ep_loss / std::max(1, nb)}});
  }
  r.net.trained = true;
  return r;
}

// ---------------------------------------------------------------------------
// Checkpoint I/O

inline void save_saliency(const fs::path& stem, const SaliencyNet<float>& s,
                          std::uint64_t train_seed) {
  nn::save_store(fs::path(stem.string() + ".bin"), s.store);
  nlohmann::json j{{"kind", "saliency_net"},
                   {"arch_hash", hex64(fnv1a(s.cfg.arch_string()))},
                   {"img_size", s.cfg.img_size},
                   {"base", s.cfg.base},
                   {"seed", train_seed},
                   {"trained", s.trained}};
  write_text_file(fs::path(stem.string() + ".json"), j.dump(1) + "\n");
}

inline SaliencyNet<float> load_saliency(const fs::path& stem) {
  require(fs::exists(fs::path(stem.string() + ".json")), ErrKind::dependency,
          "missing saliency checkpoint: " + stem.string() + ".json");
  const auto j = nlohmann::json::parse(read_text_file(fs::path(stem.string() + ".json")));
  SaliencyConfig cfg;
  cfg.img_size = j.at("img_size").get<int>();
  cfg.base = j.at("base").get<int>();
  SaliencyNet<float> s(cfg, 0);
  nn::load_store(fs::path(stem.string() + ".bin"), s.store);
  s.trained = j.value("trained", true);
  return s;
}

}  // namespace sodgan
