#pragma once

// Flat parameter storage. Each network owns one ParamStore; layers allocate
// named slots at construction and address their weights by offset. A gradient
// buffer is a plain vector with the same layout, which makes optimizer steps,
// serialization, checksums and per-sample gradient accumulation trivial.

#include <string>
#include <vector>

#include "sodgan/nn/ops.hpp"
#include "sodgan/rng.hpp"
#include "sodgan/tensor.hpp"

namespace sodgan::nn {

template <class T>
struct ParamStore {
  struct Slot {
    std::string name;
    std::size_t off;
    std::vector<int> shape;
    std::size_t count;
  };

  std::vector<T> w;
  std::vector<Slot> slots;

  std::size_t add(std::string name, std::vector<int> shape) {
    const std::size_t n = Tensor<T>::count(shape);
    slots.push_back({std::move(name), w.size(), std::move(shape), n});
    w.resize(w.size() + n, T(0));
    return slots.size() - 1;
  }

  T* ptr(std::size_t slot) { return w.data() + slots[slot].off; }
  const T* ptr(std::size_t slot) const { return w.data() + slots[slot].off; }
  std::size_t size() const { return w.size(); }

  std::uint64_t checksum() const { return fnv1a(w.data(), w.size() * sizeof(T)); }
};

template <class T>
using GradBuf = std::vector<T>;

// He-style fan-in init for conv/linear weights.
template <class T>
void init_normal(ParamStore<T>& st, std::size_t slot, Rng& rng, double stddev) {
  T* p = st.ptr(slot);
  for (std::size_t i = 0; i < st.slots[slot].count; ++i) p[i] = static_cast<T>(rng.normal(0.0, stddev));
}

// ---------------------------------------------------------------------------
// Parameterized layers (thin handles into the store)

template <class T>
struct Conv {
  int cin = 0, cout = 0, k = 3, stride = 1, pad = 1;
  std::size_t ws = 0, bs = 0;

  Conv() = default;
  Conv(ParamStore<T>& st, const std::string& name, int cin_, int cout_, int k_, int stride_,
       int pad_, Rng& rng, double gain = 1.0)
      : cin(cin_), cout(cout_), k(k_), stride(stride_), pad(pad_) {
    ws = st.add(name + ".w", {cout, cin, k, k});
    bs = st.add(name + ".b", {cout});
    init_normal(st, ws, rng, gain * std::sqrt(2.0 / (cin * k * k)));
  }

  Tensor<T> fwd(const ParamStore<T>& st, const Tensor<T>& x) const {
    return conv2d_forward(x, st.ptr(ws), st.ptr(bs), cin, cout, k, stride, pad);
  }
  Tensor<T> bwd(const ParamStore<T>& st, const Tensor<T>& x, const Tensor<T>& dy, T* g,
                bool need_dx = true) const {
    Tensor<T> dx;
    conv2d_backward(x, st.ptr(ws), dy, cin, cout, k, stride, pad,
                    g ? g + st.slots[ws].off : nullptr, g ? g + st.slots[bs].off : nullptr,
                    need_dx ? &dx : nullptr);
    return dx;
  }
  std::size_t param_count(const ParamStore<T>& st) const {
    return st.slots[ws].count + st.slots[bs].count;
  }
};

template <class T>
struct Linear {
  int in = 0, out = 0;
  std::size_t ws = 0, bs = 0;

  Linear() = default;
  Linear(ParamStore<T>& st, const std::string& name, int in_, int out_, Rng& rng, double gain = 1.0)
      : in(in_), out(out_) {
    ws = st.add(name + ".w", {out, in});
    bs = st.add(name + ".b", {out});
    init_normal(st, ws, rng, gain * std::sqrt(2.0 / in));
  }

  std::vector<T> fwd(const ParamStore<T>& st, const std::vector<T>& x) const {
    return linear_forward(x, st.ptr(ws), st.ptr(bs), in, out);
  }
  std::vector<T> bwd(const ParamStore<T>& st, const std::vector<T>& x, const std::vector<T>& dy,
                     T* g, bool need_dx = true) const {
    std::vector<T> dx;
    linear_backward(x, st.ptr(ws), dy, in, out, g ? g + st.slots[ws].off : nullptr,
                    g ? g + st.slots[bs].off : nullptr, need_dx ? &dx : nullptr);
    return dx;
  }
  std::size_t param_count(const ParamStore<T>& st) const {
    return st.slots[ws].count + st.slots[bs].count;
  }
};

template <class T>
struct Embedding {
  int rows = 0, dim = 0;
  std::size_t ws = 0;

  Embedding() = default;
  Embedding(ParamStore<T>& st, const std::string& name, int rows_, int dim_, Rng& rng)
      : rows(rows_), dim(dim_) {
    ws = st.add(name + ".w", {rows, dim});
    init_normal(st, ws, rng, 0.05);
  }

  std::vector<T> fwd(const ParamStore<T>& st, int row) const {
    require(row >= 0 && row < rows, ErrKind::invalid_argument, "embedding: row out of range");
    const T* p = st.ptr(ws) + static_cast<std::size_t>(row) * dim;
    return std::vector<T>(p, p + dim);
  }
  void bwd(const ParamStore<T>& st, int row, const std::vector<T>& dy, T* g) const {
    if (!g) return;
    T* gp = g + st.slots[ws].off + static_cast<std::size_t>(row) * dim;
    for (int i = 0; i < dim; ++i) gp[i] += dy[i];
  }
};

// ---------------------------------------------------------------------------
// Adam

template <class T>
struct Adam {
  double lr = 1e-3, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::vector<double> m, v;
  long t = 0;

  Adam() = default;
  Adam(double lr_, double b1, double b2) : lr(lr_), beta1(b1), beta2(b2) {}

  void step(std::vector<T>& w, const std::vector<T>& g) {
    if (m.empty()) {
      m.assign(w.size(), 0.0);
      v.assign(w.size(), 0.0);
    }
    ++t;
    const double c1 = 1.0 - std::pow(beta1, t);
    const double c2 = 1.0 - std::pow(beta2, t);
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = static_cast<double>(g[i]);
      m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
      v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      w[i] = static_cast<T>(static_cast<double>(w[i]) - lr * mhat / (std::sqrt(vhat) + eps));
    }
  }
};

// ---------------------------------------------------------------------------
// Deterministic per-sample gradient accumulation: workers fill disjoint
// slots, the reduction runs in sample order, so results are bit-identical
// for any worker count.

template <class T>
struct BatchGrads {
  std::vector<GradBuf<T>> per_sample;

  void reset(int batch, std::size_t nparams) {
    per_sample.assign(batch, GradBuf<T>(nparams, T(0)));
  }
  GradBuf<T>& slot(int i) { return per_sample[i]; }

  // Mean gradient over the batch, reduced in sample order.
  GradBuf<T> reduce_mean() const {
    GradBuf<T> out(per_sample.empty() ? 0 : per_sample[0].size(), T(0));
    for (const auto& g : per_sample)
      for (std::size_t j = 0; j < out.size(); ++j) out[j] += g[j];
    const T inv = per_sample.empty() ? T(0) : T(1) / static_cast<T>(per_sample.size());
    for (auto& x : out) x *= inv;
    return out;
  }
};

}  // namespace sodgan::nn
