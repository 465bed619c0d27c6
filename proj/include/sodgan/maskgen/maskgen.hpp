#pragma once

// Few-shot saliency mask branch on top of the frozen generator pyramid.
//
//   fuse:    every level is bilinearly upsampled to the output resolution,
//            reduced to C' channels by a 1x1 conv, and channel-concatenated.
//   attend:  OA(f*) = LA(f*) + GA(f*); both stacks are PWC -> BN -> ReLU ->
//            PWC, GA pools globally first and its vector is broadcast. The
//            fused map is gated elementwise: f' = f* (x) OA(f*), with no
//            extra squashing.
//   head:    per-pixel classifier (CNN or MLP variant) to 2 logits, softmax
//            foreground probability.
//
// The attention BN layers normalize with tracked (EMA) statistics so the
// local and global stacks apply the same per-channel transform; statistics
// live in the parameter store, receive no gradient, and are refreshed once
// per training batch. MLP-head BN normalizes over the pixel batch of the
// image being classified.

#include "sodgan/den/embedding.hpp"
#include "sodgan/eval/metrics.hpp"
#include "sodgan/quality/quality.hpp"

namespace sodgan {

// ---------------------------------------------------------------------------
// Classification head variants (widths follow the fixed architecture table).

enum class HeadVariant { cnn_s, cnn_m, cnn_l, mlp_s, mlp_m, mlp_l };

inline const char* head_name(HeadVariant v) {
  switch (v) {
    case HeadVariant::cnn_s: return "cnn-s";
    case HeadVariant::cnn_m: return "cnn-m";
    case HeadVariant::cnn_l: return "cnn-l";
    case HeadVariant::mlp_s: return "mlp-s";
    case HeadVariant::mlp_m: return "mlp-m";
    case HeadVariant::mlp_l: return "mlp-l";
  }
  return "?";
}

inline HeadVariant head_from_name(const std::string& s) {
  for (HeadVariant v : {HeadVariant::cnn_s, HeadVariant::cnn_m, HeadVariant::cnn_l,
                        HeadVariant::mlp_s, HeadVariant::mlp_m, HeadVariant::mlp_l})
    if (s == head_name(v)) return v;
  fail(ErrKind::config, "unknown head variant: " + s);
}

inline bool head_is_cnn(HeadVariant v) {
  return v == HeadVariant::cnn_s || v == HeadVariant::cnn_m || v == HeadVariant::cnn_l;
}

// Output widths of the stacked layers; CNN variants are preceded by a 1x1
// embedding conv to 128 channels.
inline std::vector<int> head_widths(HeadVariant v) {
  switch (v) {
    case HeadVariant::cnn_s: return {128, 32, 2};
    case HeadVariant::cnn_m: return {128, 64, 64, 32, 2};
    case HeadVariant::cnn_l: return {128, 64, 64, 64, 64, 32, 2};
    case HeadVariant::mlp_s: return {128, 32, 2};
    case HeadVariant::mlp_m: return {128, 64, 32, 2};
    case HeadVariant::mlp_l: return {128, 64, 64, 32, 2};
  }
  return {};
}

// Closed-form conv/linear parameter count for a head with input width c.
inline std::size_t head_param_formula(HeadVariant v, int c) {
  const auto widths = head_widths(v);
  std::size_t n = 0;
  if (head_is_cnn(v)) {
    n += static_cast<std::size_t>(c) * 128 + 128;  // 1x1 embedding
    int in = 128;
    for (int w : widths) {
      n += static_cast<std::size_t>(in) * w * 9 + w;
      in = w;
    }
  } else {
    int in = c;
    for (int w : widths) {
      n += static_cast<std::size_t>(in) * w + w;
      in = w;
    }
  }
  return n;
}

// ---------------------------------------------------------------------------

enum class OaffMode { full, ga_only, none };

inline const char* oaff_mode_name(OaffMode m) {
  switch (m) {
    case OaffMode::full: return "full";
    case OaffMode::ga_only: return "ga-only";
    case OaffMode::none: return "none";
  }
  return "?";
}

inline OaffMode oaff_mode_from_name(const std::string& s) {
  for (OaffMode m : {OaffMode::full, OaffMode::ga_only, OaffMode::none})
    if (s == oaff_mode_name(m)) return m;
  fail(ErrKind::config, "unknown oaff mode: " + s);
}

// Channel norm with tracked statistics (mean/var slots in the store; no
// affine, no gradient into the statistics).
template <class T>
struct EmaNorm {
  int ch = 0;
  std::size_t mean_s = 0, var_s = 0;
  double momentum = 0.1;

  EmaNorm() = default;
  EmaNorm(nn::ParamStore<T>& st, const std::string& name, int ch_) : ch(ch_) {
    mean_s = st.add(name + ".running_mean", {ch});
    var_s = st.add(name + ".running_var", {ch});
    T* v = st.ptr(var_s);
    for (int i = 0; i < ch; ++i) v[i] = T(1);
  }

  Tensor<T> fwd(const nn::ParamStore<T>& st, const Tensor<T>& x) const {
    const T* m = st.ptr(mean_s);
    const T* v = st.ptr(var_s);
    Tensor<T> y = x;
    const std::size_t plane = x.size() / ch;
    for (int c = 0; c < ch; ++c) {
      const T scale = T(1) / std::sqrt(v[c] + T(1e-5));
      T* p = y.data() + c * plane;
      for (std::size_t i = 0; i < plane; ++i) p[i] = (p[i] - m[c]) * scale;
    }
    return y;
  }

  Tensor<T> bwd(const nn::ParamStore<T>& st, const Tensor<T>& dy) const {
    const T* v = st.ptr(var_s);
    Tensor<T> dx = dy;
    const std::size_t plane = dy.size() / ch;
    for (int c = 0; c < ch; ++c) {
      const T scale = T(1) / std::sqrt(v[c] + T(1e-5));
      T* p = dx.data() + c * plane;
      for (std::size_t i = 0; i < plane; ++i) p[i] *= scale;
    }
    return dx;
  }

  struct StatAcc {
    std::vector<double> sum, sumsq;
    double count = 0;
    void init(int ch) {
      sum.assign(ch, 0.0);
      sumsq.assign(ch, 0.0);
      count = 0;
    }
    void add(const Tensor<T>& x, int ch) {
      const std::size_t plane = x.size() / ch;
      for (int c = 0; c < ch; ++c) {
        const T* p = x.data() + c * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          sum[c] += p[i];
          sumsq[c] += static_cast<double>(p[i]) * p[i];
        }
      }
      count += static_cast<double>(plane);
    }
  };

  void ema_update(nn::ParamStore<T>& st, const StatAcc& acc) {
    if (acc.count <= 0) return;
    T* m = st.ptr(mean_s);
    T* v = st.ptr(var_s);
    for (int c = 0; c < ch; ++c) {
      const double mean = acc.sum[c] / acc.count;
      const double var = std::max(0.0, acc.sumsq[c] / acc.count - mean * mean);
      m[c] = static_cast<T>((1.0 - momentum) * m[c] + momentum * mean);
      v[c] = static_cast<T>((1.0 - momentum) * v[c] + momentum * var);
    }
  }
};

// ---------------------------------------------------------------------------

struct MaskGenConfig {
  std::vector<int> level_channels;  // pyramid channel widths, coarse to fine
  int out_size = 64;
  int reduced = 8;  // C' per level
  HeadVariant head = HeadVariant::mlp_s;
  OaffMode mode = OaffMode::full;

  int fused_channels() const { return reduced * static_cast<int>(level_channels.size()); }
  int la_hidden() const { return std::max(4, fused_channels() / 2); }

  static MaskGenConfig for_generator(const GeneratorConfig& g) {
    MaskGenConfig c;
    c.out_size = g.img_size;
    for (int i = 0; i < g.blocks(); ++i) c.level_channels.push_back(g.block_channels(i));
    return c;
  }

  std::string arch_string() const {
    std::string s = "maskgen:v1:out=" + std::to_string(out_size) +
                    ":c=" + std::to_string(reduced) + ":head=" + head_name(head) +
                    ":mode=" + oaff_mode_name(mode) + ":levels=";
    for (int c : level_channels) s += std::to_string(c) + ",";
    return s;
  }
};

template <class T>
struct MaskGeneratorNet {
  MaskGenConfig cfg;
  nn::ParamStore<T> store;
  std::vector<nn::Conv<T>> reducers;
  nn::Conv<T> la_pwc1, la_pwc2;
  nn::Linear<T> ga_pwc1, ga_pwc2;
  EmaNorm<T> la_norm, ga_norm;
  nn::Conv<T> head_embed;                // CNN variants only
  std::vector<nn::Conv<T>> head_layers;  // k3 convs (CNN) or 1x1 convs (MLP)
  std::size_t head_params_begin = 0, head_params_end = 0;
  bool trained = false;

  MaskGeneratorNet() = default;
  MaskGeneratorNet(const MaskGenConfig& c, std::uint64_t init_seed) : cfg(c) {
    require(!cfg.level_channels.empty(), ErrKind::invalid_argument,
            "maskgen: no pyramid levels configured");
    Rng rng(derive_seed(init_seed, {0x3A5Cull}));
    for (std::size_t i = 0; i < cfg.level_channels.size(); ++i)
      reducers.emplace_back(store, "reduce" + std::to_string(i), cfg.level_channels[i], cfg.reduced,
                            1, 1, 0, rng);
    const int C = cfg.fused_channels();
    const int H = cfg.la_hidden();
    if (cfg.mode != OaffMode::none) {
      if (cfg.mode == OaffMode::full) {
        la_pwc1 = nn::Conv<T>(store, "la.pwc1", C, H, 1, 1, 0, rng);
        la_norm = EmaNorm<T>(store, "la.bn", H);
        la_pwc2 = nn::Conv<T>(store, "la.pwc2", H, C, 1, 1, 0, rng, 0.5);
      }
      ga_pwc1 = nn::Linear<T>(store, "ga.pwc1", C, H, rng);
      ga_norm = EmaNorm<T>(store, "ga.bn", H);
      ga_pwc2 = nn::Linear<T>(store, "ga.pwc2", H, C, rng, 0.5);
    }

    head_params_begin = store.size();
    const auto widths = head_widths(cfg.head);
    int in = C;
    if (head_is_cnn(cfg.head)) {
      head_embed = nn::Conv<T>(store, "head.embed", C, 128, 1, 1, 0, rng);
      in = 128;
      for (std::size_t i = 0; i < widths.size(); ++i) {
        head_layers.emplace_back(store, "head.conv" + std::to_string(i), in, widths[i], 3, 1, 1,
                                 rng);
        in = widths[i];
      }
    } else {
      for (std::size_t i = 0; i < widths.size(); ++i) {
        head_layers.emplace_back(store, "head.fc" + std::to_string(i), in, widths[i], 1, 1, 0, rng);
        in = widths[i];
      }
    }
    head_params_end = store.size();
  }

  std::size_t head_param_count() const { return head_params_end - head_params_begin; }

  struct Acts {
    std::vector<Tensor<T>> up;
    Tensor<T> fused;
    Tensor<T> la_h1, la_hn, la_hr;  // LA pipeline
    std::vector<T> ga_vec, ga_h1, ga_hn, ga_hr, ga_out;
    Tensor<T> oa, gated;
    Tensor<T> embed_pre;  // CNN head embedding
    std::vector<Tensor<T>> layer_in, layer_pre;
    std::vector<nn::NormStats<T>> mlp_norm;
    std::vector<Tensor<T>> mlp_normed;
    Tensor<T> logits, prob;
  };

  // --- fuse (upsample + 1x1 reduce + concat) -------------------------------
  const Tensor<T>& fuse_features(const std::vector<Tensor<T>>& pyramid, Acts& a) const {
    require(pyramid.size() == reducers.size(), ErrKind::invalid_argument,
            "fuse_features: pyramid level count mismatch");
    a.up.clear();
    std::vector<Tensor<T>> reduced;
    for (std::size_t i = 0; i < pyramid.size(); ++i) {
      require(pyramid[i].shape[0] == cfg.level_channels[i], ErrKind::invalid_argument,
              "fuse_features: level channel mismatch");
      a.up.push_back(nn::upsample_bilinear_forward(pyramid[i], cfg.out_size, cfg.out_size));
      reduced.push_back(reducers[i].fwd(store, a.up.back()));
    }
    std::vector<const Tensor<T>*> parts;
    for (const auto& t : reduced) parts.push_back(&t);
    a.fused = nn::concat_channels(parts);
    return a.fused;
  }

  // --- omni attention: OA = LA + GA ----------------------------------------
  const Tensor<T>& omni_attention(const Tensor<T>& fused, Acts& a) const {
    require(cfg.mode != OaffMode::none, ErrKind::invalid_argument,
            "omni_attention: attention disabled in this configuration");
    require(fused.shape[0] == cfg.fused_channels() && fused.shape[1] == cfg.out_size &&
                fused.shape[2] == cfg.out_size,
            ErrKind::invalid_argument, "omni_attention: shape mismatch");
    const int C = cfg.fused_channels();
    a.ga_vec = nn::gap_forward(fused);
    a.ga_h1 = ga_pwc1.fwd(store, a.ga_vec);
    Tensor<T> gt({static_cast<int>(a.ga_h1.size()), 1, 1}, a.ga_h1);
    a.ga_hn = ga_norm.fwd(store, gt).v;
    a.ga_hr = a.ga_hn;
    for (auto& v : a.ga_hr) v = v > T(0) ? v : T(0);
    a.ga_out = ga_pwc2.fwd(store, a.ga_hr);

    a.oa = Tensor<T>({C, cfg.out_size, cfg.out_size});
    const std::size_t plane = a.oa.size() / C;
    for (int c = 0; c < C; ++c) {
      T* p = a.oa.data() + c * plane;
      for (std::size_t i = 0; i < plane; ++i) p[i] = a.ga_out[c];
    }
    if (cfg.mode == OaffMode::full) {
      a.la_h1 = la_pwc1.fwd(store, fused);
      a.la_hn = la_norm.fwd(store, a.la_h1);
      a.la_hr = nn::lrelu_forward(a.la_hn, T(0));  // ReLU
      Tensor<T> la_out = la_pwc2.fwd(store, a.la_hr);
      for (std::size_t i = 0; i < a.oa.size(); ++i) a.oa.v[i] += la_out.v[i];
    }
    return a.oa;
  }

  // --- elementwise gate: f' = f* (x) OA ------------------------------------
  static Tensor<T> apply_attention(const Tensor<T>& fused, const Tensor<T>& oa) {
    require(fused.same_shape(oa), ErrKind::invalid_argument, "apply_attention: shape mismatch");
    Tensor<T> out = fused;
    for (std::size_t i = 0; i < out.size(); ++i) out.v[i] *= oa.v[i];
    return out;
  }

  // --- head -----------------------------------------------------------------
  const Tensor<T>& classify_pixels(const Tensor<T>& fprime, Acts& a) const {
    require(fprime.shape[0] == cfg.fused_channels(), ErrKind::invalid_argument,
            "classify_pixels: input width mismatch");
    a.layer_in.clear();
    a.layer_pre.clear();
    a.mlp_norm.clear();
    a.mlp_normed.clear();
    Tensor<T> x = fprime;
    if (head_is_cnn(cfg.head)) {
      a.embed_pre = head_embed.fwd(store, x);
      x = nn::lrelu_forward(a.embed_pre, T(0.01));
      for (std::size_t i = 0; i < head_layers.size(); ++i) {
        a.layer_in.push_back(x);
        a.layer_pre.push_back(head_layers[i].fwd(store, x));
        x = i + 1 < head_layers.size() ? nn::lrelu_forward(a.layer_pre[i], T(0.01))
                                       : a.layer_pre[i];
      }
    } else {
      for (std::size_t i = 0; i < head_layers.size(); ++i) {
        a.layer_in.push_back(x);
        a.layer_pre.push_back(head_layers[i].fwd(store, x));
        if (i + 1 < head_layers.size()) {
          nn::NormStats<T> st;
          Tensor<T> normed = nn::spatial_norm_forward(a.layer_pre[i], st);
          a.mlp_norm.push_back(st);
          a.mlp_normed.push_back(normed);
          x = nn::lrelu_forward(normed, T(0));  // ReLU
        } else {
          x = a.layer_pre[i];
        }
      }
    }
    a.logits = std::move(x);
    return a.logits;
  }

  // Full forward: pyramid -> foreground probability map (H,W).
  const Tensor<T>& forward(const std::vector<Tensor<T>>& pyramid, Acts& a) const {
    fuse_features(pyramid, a);
    if (cfg.mode == OaffMode::none) {
      a.gated = a.fused;
    } else {
      omni_attention(a.fused, a);
      a.gated = apply_attention(a.fused, a.oa);
    }
    classify_pixels(a.gated, a);
    a.prob = nn::softmax2_forward(a.logits);
    return a.prob;
  }

  // Backward from d(prob); parameter grads accumulate into g. The generator
  // pyramid is frozen, so no gradient is produced past the reducers.
  void backward(const Tensor<T>& dprob, const Acts& a, T* g) const {
    Tensor<T> dx = nn::softmax2_backward(a.prob, dprob);

    if (head_is_cnn(cfg.head)) {
      for (int i = static_cast<int>(head_layers.size()) - 1; i >= 0; --i) {
        if (i + 1 < static_cast<int>(head_layers.size()))
          dx = nn::lrelu_backward(a.layer_pre[i], dx, T(0.01));
        dx = head_layers[i].bwd(store, a.layer_in[i], dx, g);
      }
      dx = nn::lrelu_backward(a.embed_pre, dx, T(0.01));
      dx = head_embed.bwd(store, a.gated, dx, g);
    } else {
      for (int i = static_cast<int>(head_layers.size()) - 1; i >= 0; --i) {
        if (i + 1 < static_cast<int>(head_layers.size())) {
          dx = nn::lrelu_backward(a.mlp_normed[i], dx, T(0));
          dx = nn::spatial_norm_backward(a.layer_pre[i], a.mlp_norm[i], dx);
        }
        dx = head_layers[i].bwd(store, a.layer_in[i], dx, g);
      }
    }

    // dx is now d(gated).
    Tensor<T> dfused;
    if (cfg.mode == OaffMode::none) {
      dfused = dx;
    } else {
      const int C = cfg.fused_channels();
      Tensor<T> doa = dx;
      dfused = dx;
      for (std::size_t i = 0; i < dx.size(); ++i) {
        doa.v[i] = dx.v[i] * a.fused.v[i];
        dfused.v[i] = dx.v[i] * a.oa.v[i];
      }
      // GA branch (broadcast adjoint = spatial sum).
      const std::size_t plane = doa.size() / C;
      std::vector<T> dga(C, T(0));
      for (int c = 0; c < C; ++c) {
        const T* p = doa.data() + c * plane;
        T acc = 0;
        for (std::size_t i = 0; i < plane; ++i) acc += p[i];
        dga[c] = acc;
      }
      auto dga_hr = ga_pwc2.bwd(store, a.ga_hr, dga, g);
      for (std::size_t i = 0; i < dga_hr.size(); ++i)
        if (a.ga_hn[i] <= T(0)) dga_hr[i] = T(0);
      Tensor<T> dgn({static_cast<int>(dga_hr.size()), 1, 1}, dga_hr);
      auto dga_vec = ga_pwc1.bwd(store, a.ga_vec, ga_norm.bwd(store, dgn).v, g);
      Tensor<T> dfused_ga = nn::gap_backward({C, cfg.out_size, cfg.out_size}, dga_vec);
      for (std::size_t i = 0; i < dfused.size(); ++i) dfused.v[i] += dfused_ga.v[i];

      if (cfg.mode == OaffMode::full) {
        Tensor<T> dla = la_pwc2.bwd(store, a.la_hr, doa, g);
        dla = nn::lrelu_backward(a.la_hn, dla, T(0));
        dla = la_norm.bwd(store, dla);
        Tensor<T> dfused_la = la_pwc1.bwd(store, a.fused, dla, g);
        for (std::size_t i = 0; i < dfused.size(); ++i) dfused.v[i] += dfused_la.v[i];
      }
    }

    const auto parts =
        nn::split_channels(dfused, std::vector<int>(cfg.level_channels.size(), cfg.reduced));
    for (std::size_t i = 0; i < reducers.size(); ++i)
      reducers[i].bwd(store, a.up[i], parts[i], g, /*need_dx=*/false);
  }
};

// ---------------------------------------------------------------------------
// Supervised loss: standard BCE plus the dice complement,
//   L_S = BCE(pred, gt) + (1 - 2*sum(y*p) / sum(y+p)).
// Probabilities are clamped to [1e-7, 1-1e-7] before the logs.

template <class T>
double loss_supervised(const Tensor<T>& pred, const Mask& gt, Tensor<T>* dpred = nullptr,
                       double* bce_out = nullptr, double* dice_out = nullptr) {
  require(pred.shape.size() == 2 || (pred.shape.size() == 3 && pred.shape[0] == 1),
          ErrKind::invalid_argument, "loss_supervised: prediction must be a single-channel map");
  const int h = pred.shape.size() == 2 ? pred.shape[0] : pred.shape[1];
  const int w = pred.shape.size() == 2 ? pred.shape[1] : pred.shape[2];
  require(h == gt.h && w == gt.w, ErrKind::invalid_argument, "loss_supervised: shape mismatch");
  gt.check_binary();

  // The clamp protects the logs only; the dice sums use the raw prediction.
  const std::size_t n = pred.size();
  double bce = 0, inter = 0, total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = nn::clamp_prob(static_cast<double>(pred.v[i]));
    const double y = gt.v[i];
    bce += -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
    inter += y * static_cast<double>(pred.v[i]);
    total += y + static_cast<double>(pred.v[i]);
  }
  bce /= static_cast<double>(n);
  const double dice = total > 0 ? 1.0 - 2.0 * inter / total : 0.0;
  if (bce_out) *bce_out = bce;
  if (dice_out) *dice_out = dice;
  if (dpred) {
    *dpred = zeros_like(pred);
    for (std::size_t i = 0; i < n; ++i) {
      const double p = nn::clamp_prob(static_cast<double>(pred.v[i]));
      const double y = gt.v[i];
      double grad = (-(y / p) + (1.0 - y) / (1.0 - p)) / static_cast<double>(n);
      if (total > 0) grad += -2.0 * (y * total - inter) / (total * total);
      dpred->v[i] = static_cast<T>(grad);
    }
  }
  return bce + dice;
}

// Generator-side quality loss: -log D_q(x_syn, y_hat), averaged.
template <class T>
double loss_adversarial_g(const QualityNet<T>& dq,
                          const std::vector<std::pair<const Image*, const Tensor<T>*>>& pairs) {
  require(!pairs.empty(), ErrKind::empty_input, "loss_adversarial_g: empty batch");
  double loss = 0;
  for (const auto& [img, mask] : pairs) {
    typename QualityNet<T>::Acts a;
    const T l = dq.logit(stack_pair<T>(*img, *mask), a);
    loss += -std::log(nn::clamp_prob(nn::sigmoid_s(static_cast<double>(l))));
  }
  return loss / pairs.size();
}

// ---------------------------------------------------------------------------
// Few-shot training of the mask branch, alternating with D_q updates.

struct MaskGenTrainConfig {
  double lr = 5e-3;
  double w_dq = 0.05;   // weight of the generator-side quality loss
  double dq_lr = 1e-3;
  int threads = 1;
};

struct MaskGenTrainResult {
  MaskGeneratorNet<float> net;
  TrainLog log;
};

inline MaskGenTrainResult train_maskgen(const FewShotSet& fs, const Generator<float>& g,
                                        QualityNet<float>* dq, int epochs, std::uint64_t seed,
                                        MaskGenConfig cfg, MaskGenTrainConfig tcfg = {}) {
  require(!fs.pairs.empty(), ErrKind::empty_input, "train_maskgen: empty few-shot set");
  require(epochs >= 1, ErrKind::invalid_argument, "train_maskgen: epochs must be >= 1");
  require(g.trained, ErrKind::invalid_argument, "train_maskgen: generator not trained");

  MaskGenTrainResult r{MaskGeneratorNet<float>(cfg, derive_seed(seed, {1})), {}};
  const int K = static_cast<int>(fs.pairs.size());

  // The generator is frozen and the few-shot latents are fixed, so pyramids
  // and synthetic images are precomputed once.
  std::vector<FeaturePyramid> pyramids(K);
  std::vector<Image> synth_imgs(K);
  parallel_for(K, tcfg.threads, [&](int i) {
    auto [img, pyr] = generate(g, fs.pairs[i].z, fs.pairs[i].c);
    synth_imgs[i] = std::move(img);
    pyramids[i] = std::move(pyr);
  });

  nn::Adam<float> opt(tcfg.lr, 0.9, 0.999);
  nn::Adam<float> opt_dq(tcfg.dq_lr, 0.5, 0.999);
  nn::BatchGrads<float> grads, dq_grads;

  const bool use_dq = dq != nullptr && tcfg.w_dq > 0;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    // --- mask branch step over all K pairs
    grads.reset(K, r.net.store.size());
    std::vector<double> ls(K), ldq(K, 0.0);
    std::vector<typename MaskGeneratorNet<float>::Acts> acts(K);
    parallel_for(K, tcfg.threads, [&](int i) {
      const auto& prob = r.net.forward(pyramids[i].levels, acts[i]);
      Tensor<float> dprob;
      ls[i] = loss_supervised(prob, fs.pairs[i].y, &dprob);
      if (use_dq) {
        typename QualityNet<float>::Acts qa;
        const float l = dq->logit(stack_pair<float>(synth_imgs[i], prob), qa);
        const double p = nn::clamp_prob(nn::sigmoid_s(static_cast<double>(l)));
        ldq[i] = -std::log(p);
        Tensor<float> dstack = dq->backward(static_cast<float>(-(1.0 - p)), qa, nullptr, true);
        const std::size_t off = static_cast<std::size_t>(3) * cfg.out_size * cfg.out_size;
        for (std::size_t j = 0; j < prob.size(); ++j)
          dprob.v[j] += static_cast<float>(tcfg.w_dq) * dstack.v[off + j];
      }
      r.net.backward(dprob, acts[i], grads.slot(i).data());
    });
    opt.step(r.net.store.w, grads.reduce_mean());

    // EMA statistics refresh from this batch, in pair order.
    if (cfg.mode != OaffMode::none) {
      typename EmaNorm<float>::StatAcc ga_acc;
      ga_acc.init(cfg.la_hidden());
      typename EmaNorm<float>::StatAcc la_acc;
      la_acc.init(cfg.la_hidden());
      for (int i = 0; i < K; ++i) {
        Tensor<float> gt({cfg.la_hidden(), 1, 1}, acts[i].ga_h1);
        ga_acc.add(gt, cfg.la_hidden());
        if (cfg.mode == OaffMode::full) la_acc.add(acts[i].la_h1, cfg.la_hidden());
      }
      r.net.ga_norm.ema_update(r.net.store, ga_acc);
      if (cfg.mode == OaffMode::full) r.net.la_norm.ema_update(r.net.store, la_acc);
    }

    // --- D_q step: real few-shot pairs vs current synthetic predictions
    double dq_obj = 0;
    if (use_dq) {
      dq_grads.reset(K, dq->store.size());
      std::vector<double> obj(K);
      std::vector<Tensor<float>> probs(K);
      parallel_for(K, tcfg.threads, [&](int i) {
        typename MaskGeneratorNet<float>::Acts ma;
        probs[i] = r.net.forward(pyramids[i].levels, ma);
        typename QualityNet<float>::Acts ar, as;
        const float lr_ = dq->logit(stack_pair<float>(fs.pairs[i].image, fs.pairs[i].y), ar);
        const float lsyn = dq->logit(stack_pair<float>(synth_imgs[i], probs[i]), as);
        const double pr = nn::clamp_prob(nn::sigmoid_s(static_cast<double>(lr_)));
        const double psn = nn::clamp_prob(nn::sigmoid_s(static_cast<double>(lsyn)));
        obj[i] = std::log(pr) + std::log(1.0 - psn);
        float* gb = dq_grads.slot(i).data();
        dq->backward(static_cast<float>(-(1.0 - pr)), ar, gb, false);
        dq->backward(static_cast<float>(psn), as, gb, false);
      });
      opt_dq.step(dq->store.w, dq_grads.reduce_mean());
      for (int i = 0; i < K; ++i) dq_obj += obj[i] / K;
    }

    double ls_mean = 0, ldq_mean = 0;
    for (int i = 0; i < K; ++i) {
      ls_mean += ls[i] / K;
      ldq_mean += ldq[i] / K;
    }
    r.log.epochs.push_back({{"epoch", static_cast<double>(epoch)},
                            {"loss_s", ls_mean},
                            {"loss_dq_gen", ldq_mean},
                            {"dq_objective", dq_obj}});
  }
  r.net.trained = true;
  if (use_dq) dq->trained = true;
  return r;
}

// One forward pass: image plus probability mask; binarize at 0.5 for the
// hard mask.
inline std::pair<Image, Mask> generate_mask(const Generator<float>& g,
                                            const MaskGeneratorNet<float>& mg, const LatentCode& z,
                                            ClassLabel cls) {
  auto [img, pyr] = generate(g, z, cls);
  typename MaskGeneratorNet<float>::Acts a;
  const auto& prob = mg.forward(pyr.levels, a);
  Mask m(img.h, img.w, false);
  m.v = prob.v;
  return {std::move(img), std::move(m)};
}

// ---------------------------------------------------------------------------
// Checkpoint I/O

inline void save_maskgen(const fs::path& stem, const MaskGeneratorNet<float>& m,
                         std::uint64_t train_seed) {
  nn::save_store(fs::path(stem.string() + ".bin"), m.store);
  nlohmann::json j{{"kind", "mask_generator"},
                   {"arch_hash", hex64(fnv1a(m.cfg.arch_string()))},
                   {"out_size", m.cfg.out_size},
                   {"level_channels", m.cfg.level_channels},
                   {"reduced", m.cfg.reduced},
                   {"head", head_name(m.cfg.head)},
                   {"mode", oaff_mode_name(m.cfg.mode)},
                   {"seed", train_seed},
                   {"trained", m.trained}};
  write_text_file(fs::path(stem.string() + ".json"), j.dump(1) + "\n");
}

inline MaskGeneratorNet<float> load_maskgen(const fs::path& stem) {
  require(fs::exists(fs::path(stem.string() + ".json")), ErrKind::dependency,
          "missing mask-generator checkpoint: " + stem.string() + ".json");
  const auto j = nlohmann::json::parse(read_text_file(fs::path(stem.string() + ".json")));
  MaskGenConfig cfg;
  cfg.out_size = j.at("out_size").get<int>();
  cfg.level_channels = j.at("level_channels").get<std::vector<int>>();
  cfg.reduced = j.at("reduced").get<int>();
  cfg.head = head_from_name(j.at("head").get<std::string>());
  cfg.mode = oaff_mode_from_name(j.at("mode").get<std::string>());
  MaskGeneratorNet<float> m(cfg, 0);
  nn::load_store(fs::path(stem.string() + ".bin"), m.store);
  m.trained = j.value("trained", true);
  return m;
}

}  // namespace sodgan
