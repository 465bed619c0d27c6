#pragma once

// Dense NN primitives with explicit backward passes. Feature maps are
// (C,H,W) row-major; weights are (Cout,Cin,K,K) for convolutions and
// (Out,In) for linear maps. Inner loops run over the contiguous W axis.
//
// Every op here is covered by central-finite-difference tests in double
// precision; keep forward/backward pairs in sync when editing.

#include <cmath>
#include <cstring>
#include <vector>

#include "sodgan/tensor.hpp"

namespace sodgan::nn {

// ---------------------------------------------------------------------------
// Convolution

inline int conv_out_dim(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

template <class T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const T* w, const T* b, int cin, int cout, int k,
                         int stride, int pad) {
  require(x.shape.size() == 3 && x.shape[0] == cin, ErrKind::invalid_argument,
          "conv2d: input channel mismatch");
  const int h = x.shape[1], wd = x.shape[2];
  const int ho = conv_out_dim(h, k, stride, pad), wo = conv_out_dim(wd, k, stride, pad);
  require(ho > 0 && wo > 0, ErrKind::invalid_argument, "conv2d: output would be empty");
  Tensor<T> y({cout, ho, wo});
  for (int co = 0; co < cout; ++co) {
    T* yc = y.data() + static_cast<std::size_t>(co) * ho * wo;
    if (b) {
      for (int i = 0; i < ho * wo; ++i) yc[i] = b[co];
    }
    for (int ci = 0; ci < cin; ++ci) {
      const T* xc = x.data() + static_cast<std::size_t>(ci) * h * wd;
      const T* wrow = w + (static_cast<std::size_t>(co) * cin + ci) * k * k;
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          const T wv = wrow[ky * k + kx];
          if (wv == T(0)) continue;
          for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy * stride + ky - pad;
            if (iy < 0 || iy >= h) continue;
            const T* xrow = xc + static_cast<std::size_t>(iy) * wd;
            T* yrow = yc + static_cast<std::size_t>(oy) * wo;
            if (stride == 1) {
              const int x0 = std::max(0, pad - kx);
              const int x1 = std::min(wo, wd - kx + pad);
              const T* xp = xrow + x0 + kx - pad;
              for (int ox = x0; ox < x1; ++ox) yrow[ox] += wv * xp[ox - x0];
            } else {
              for (int ox = 0; ox < wo; ++ox) {
                const int ix = ox * stride + kx - pad;
                if (ix >= 0 && ix < wd) yrow[ox] += wv * xrow[ix];
              }
            }
          }
        }
      }
    }
  }
  return y;
}

// Any of dw/db/dx may be null. dw/db are accumulated into (callers zero them
// once per sample); dx is overwritten.
template <class T>
void conv2d_backward(const Tensor<T>& x, const T* w, const Tensor<T>& dy, int cin, int cout, int k,
                     int stride, int pad, T* dw, T* db, Tensor<T>* dx) {
  const int h = x.shape[1], wd = x.shape[2];
  const int ho = dy.shape[1], wo = dy.shape[2];
  if (dx) {
    dx->shape = x.shape;
    dx->v.assign(x.size(), T(0));
  }
  for (int co = 0; co < cout; ++co) {
    const T* dyc = dy.data() + static_cast<std::size_t>(co) * ho * wo;
    if (db) {
      T acc = 0;
      for (int i = 0; i < ho * wo; ++i) acc += dyc[i];
      db[co] += acc;
    }
    for (int ci = 0; ci < cin; ++ci) {
      const T* xc = x.data() + static_cast<std::size_t>(ci) * h * wd;
      T* dxc = dx ? dx->data() + static_cast<std::size_t>(ci) * h * wd : nullptr;
      const std::size_t wbase = (static_cast<std::size_t>(co) * cin + ci) * k * k;
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          const T wv = w[wbase + ky * k + kx];
          T wacc = 0;
          for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy * stride + ky - pad;
            if (iy < 0 || iy >= h) continue;
            const T* xrow = xc + static_cast<std::size_t>(iy) * wd;
            T* dxrow = dxc ? dxc + static_cast<std::size_t>(iy) * wd : nullptr;
            const T* dyrow = dyc + static_cast<std::size_t>(oy) * wo;
            if (stride == 1) {
              const int x0 = std::max(0, pad - kx);
              const int x1 = std::min(wo, wd - kx + pad);
              const int shift = kx - pad;
              if (dw) {
                for (int ox = x0; ox < x1; ++ox) wacc += dyrow[ox] * xrow[ox + shift];
              }
              if (dxrow) {
                for (int ox = x0; ox < x1; ++ox) dxrow[ox + shift] += wv * dyrow[ox];
              }
            } else {
              for (int ox = 0; ox < wo; ++ox) {
                const int ix = ox * stride + kx - pad;
                if (ix < 0 || ix >= wd) continue;
                if (dw) wacc += dyrow[ox] * xrow[ix];
                if (dxrow) dxrow[ix] += wv * dyrow[ox];
              }
            }
          }
          if (dw) dw[wbase + ky * k + kx] += wacc;
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Linear

template <class T>
std::vector<T> linear_forward(const std::vector<T>& x, const T* w, const T* b, int in, int out) {
  require(static_cast<int>(x.size()) == in, ErrKind::invalid_argument, "linear: input size mismatch");
  std::vector<T> y(out);
  for (int o = 0; o < out; ++o) {
    T acc = b ? b[o] : T(0);
    const T* wrow = w + static_cast<std::size_t>(o) * in;
    for (int i = 0; i < in; ++i) acc += wrow[i] * x[i];
    y[o] = acc;
  }
  return y;
}

template <class T>
void linear_backward(const std::vector<T>& x, const T* w, const std::vector<T>& dy, int in, int out,
                     T* dw, T* db, std::vector<T>* dx) {
  if (dx) dx->assign(in, T(0));
  for (int o = 0; o < out; ++o) {
    const T g = dy[o];
    if (db) db[o] += g;
    const T* wrow = w + static_cast<std::size_t>(o) * in;
    T* dwrow = dw ? dw + static_cast<std::size_t>(o) * in : nullptr;
    for (int i = 0; i < in; ++i) {
      if (dwrow) dwrow[i] += g * x[i];
      if (dx) (*dx)[i] += wrow[i] * g;
    }
  }
}

// ---------------------------------------------------------------------------
// Activations (elementwise, backward from saved input)

template <class T>
Tensor<T> lrelu_forward(const Tensor<T>& x, T slope) {
  Tensor<T> y = x;
  for (auto& v : y.v) v = v > T(0) ? v : slope * v;
  return y;
}

template <class T>
Tensor<T> lrelu_backward(const Tensor<T>& x, const Tensor<T>& dy, T slope) {
  Tensor<T> dx = dy;
  for (std::size_t i = 0; i < x.size(); ++i) dx.v[i] = x.v[i] > T(0) ? dy.v[i] : slope * dy.v[i];
  return dx;
}

template <class T>
Tensor<T> sigmoid_forward(const Tensor<T>& x) {
  Tensor<T> y = x;
  for (auto& v : y.v) v = T(1) / (T(1) + std::exp(-v));
  return y;
}

// Backward from the saved *output*.
template <class T>
Tensor<T> sigmoid_backward(const Tensor<T>& y, const Tensor<T>& dy) {
  Tensor<T> dx = dy;
  for (std::size_t i = 0; i < y.size(); ++i) dx.v[i] = dy.v[i] * y.v[i] * (T(1) - y.v[i]);
  return dx;
}

// ---------------------------------------------------------------------------
// Spatial normalization: per-channel zero-mean/unit-var over H*W (no affine).
// Used both as instance norm in conv stacks and as the pixel-batch norm of
// per-pixel MLP heads.

template <class T>
struct NormStats {
  std::vector<T> mean, istd;
};

template <class T>
Tensor<T> spatial_norm_forward(const Tensor<T>& x, NormStats<T>& st, T eps = T(1e-5)) {
  const int c = x.shape[0];
  const std::size_t n = static_cast<std::size_t>(x.shape[1]) * x.shape[2];
  require(n > 0, ErrKind::invalid_argument, "spatial_norm: empty plane");
  Tensor<T> y = x;
  st.mean.assign(c, T(0));
  st.istd.assign(c, T(0));
  for (int ci = 0; ci < c; ++ci) {
    const T* xc = x.data() + ci * n;
    T* yc = y.data() + ci * n;
    T mu = 0;
    for (std::size_t i = 0; i < n; ++i) mu += xc[i];
    mu /= static_cast<T>(n);
    T var = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const T d = xc[i] - mu;
      var += d * d;
    }
    var /= static_cast<T>(n);
    const T istd = T(1) / std::sqrt(var + eps);
    st.mean[ci] = mu;
    st.istd[ci] = istd;
    for (std::size_t i = 0; i < n; ++i) yc[i] = (xc[i] - mu) * istd;
  }
  return y;
}

template <class T>
Tensor<T> spatial_norm_backward(const Tensor<T>& x, const NormStats<T>& st, const Tensor<T>& dy) {
  const int c = x.shape[0];
  const std::size_t n = static_cast<std::size_t>(x.shape[1]) * x.shape[2];
  Tensor<T> dx = zeros_like(x);
  for (int ci = 0; ci < c; ++ci) {
    const T* xc = x.data() + ci * n;
    const T* dyc = dy.data() + ci * n;
    T* dxc = dx.data() + ci * n;
    const T mu = st.mean[ci], istd = st.istd[ci];
    T sum_dy = 0, sum_dy_xhat = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const T xhat = (xc[i] - mu) * istd;
      sum_dy += dyc[i];
      sum_dy_xhat += dyc[i] * xhat;
    }
    const T inv_n = T(1) / static_cast<T>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const T xhat = (xc[i] - mu) * istd;
      dxc[i] = istd * (dyc[i] - inv_n * sum_dy - xhat * inv_n * sum_dy_xhat);
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Pooling / resampling

template <class T>
std::vector<T> gap_forward(const Tensor<T>& x) {
  const int c = x.shape[0];
  const std::size_t n = static_cast<std::size_t>(x.shape[1]) * x.shape[2];
  std::vector<T> y(c);
  for (int ci = 0; ci < c; ++ci) {
    T acc = 0;
    const T* xc = x.data() + ci * n;
    for (std::size_t i = 0; i < n; ++i) acc += xc[i];
    y[ci] = acc / static_cast<T>(n);
  }
  return y;
}

template <class T>
Tensor<T> gap_backward(const std::vector<int>& xshape, const std::vector<T>& dy) {
  Tensor<T> dx(xshape);
  const std::size_t n = static_cast<std::size_t>(xshape[1]) * xshape[2];
  for (int ci = 0; ci < xshape[0]; ++ci) {
    const T g = dy[ci] / static_cast<T>(n);
    T* dxc = dx.data() + ci * n;
    for (std::size_t i = 0; i < n; ++i) dxc[i] = g;
  }
  return dx;
}

template <class T>
Tensor<T> upsample_nearest2x_forward(const Tensor<T>& x) {
  const int c = x.shape[0], h = x.shape[1], w = x.shape[2];
  Tensor<T> y({c, 2 * h, 2 * w});
  for (int ci = 0; ci < c; ++ci) {
    for (int oy = 0; oy < 2 * h; ++oy) {
      const T* xrow = x.data() + (static_cast<std::size_t>(ci) * h + oy / 2) * w;
      T* yrow = y.data() + (static_cast<std::size_t>(ci) * 2 * h + oy) * 2 * w;
      for (int ox = 0; ox < 2 * w; ++ox) yrow[ox] = xrow[ox / 2];
    }
  }
  return y;
}

template <class T>
Tensor<T> upsample_nearest2x_backward(const std::vector<int>& xshape, const Tensor<T>& dy) {
  Tensor<T> dx(xshape);
  const int c = xshape[0], h = xshape[1], w = xshape[2];
  for (int ci = 0; ci < c; ++ci) {
    for (int oy = 0; oy < 2 * h; ++oy) {
      const T* dyrow = dy.data() + (static_cast<std::size_t>(ci) * 2 * h + oy) * 2 * w;
      T* dxrow = dx.data() + (static_cast<std::size_t>(ci) * h + oy / 2) * w;
      for (int ox = 0; ox < 2 * w; ++ox) dxrow[ox / 2] += dyrow[ox];
    }
  }
  return dx;
}

// Bilinear resize with corner alignment; identity when sizes match.
template <class T>
Tensor<T> upsample_bilinear_forward(const Tensor<T>& x, int oh, int ow) {
  const int c = x.shape[0], h = x.shape[1], w = x.shape[2];
  Tensor<T> y({c, oh, ow});
  const double sy = oh > 1 ? static_cast<double>(h - 1) / (oh - 1) : 0.0;
  const double sx = ow > 1 ? static_cast<double>(w - 1) / (ow - 1) : 0.0;
  for (int oy = 0; oy < oh; ++oy) {
    const double fy = oy * sy;
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, h - 1);
    const T wy = static_cast<T>(fy - y0);
    for (int ox = 0; ox < ow; ++ox) {
      const double fx = ox * sx;
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, w - 1);
      const T wx = static_cast<T>(fx - x0);
      for (int ci = 0; ci < c; ++ci) {
        const T* xc = x.data() + static_cast<std::size_t>(ci) * h * w;
        const T v = (T(1) - wy) * ((T(1) - wx) * xc[y0 * w + x0] + wx * xc[y0 * w + x1]) +
                    wy * ((T(1) - wx) * xc[y1 * w + x0] + wx * xc[y1 * w + x1]);
        y.at(ci, oy, ox) = v;
      }
    }
  }
  return y;
}

template <class T>
Tensor<T> upsample_bilinear_backward(const std::vector<int>& xshape, const Tensor<T>& dy) {
  const int c = xshape[0], h = xshape[1], w = xshape[2];
  const int oh = dy.shape[1], ow = dy.shape[2];
  Tensor<T> dx(xshape);
  const double sy = oh > 1 ? static_cast<double>(h - 1) / (oh - 1) : 0.0;
  const double sx = ow > 1 ? static_cast<double>(w - 1) / (ow - 1) : 0.0;
  for (int oy = 0; oy < oh; ++oy) {
    const double fy = oy * sy;
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, h - 1);
    const T wy = static_cast<T>(fy - y0);
    for (int ox = 0; ox < ow; ++ox) {
      const double fx = ox * sx;
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, w - 1);
      const T wx = static_cast<T>(fx - x0);
      for (int ci = 0; ci < c; ++ci) {
        T* dxc = dx.data() + static_cast<std::size_t>(ci) * h * w;
        const T g = dy.at(ci, oy, ox);
        dxc[y0 * w + x0] += (T(1) - wy) * (T(1) - wx) * g;
        dxc[y0 * w + x1] += (T(1) - wy) * wx * g;
        dxc[y1 * w + x0] += wy * (T(1) - wx) * g;
        dxc[y1 * w + x1] += wy * wx * g;
      }
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Channel concat / split

template <class T>
Tensor<T> concat_channels(const std::vector<const Tensor<T>*>& xs) {
  require(!xs.empty(), ErrKind::invalid_argument, "concat: no inputs");
  const int h = xs[0]->shape[1], w = xs[0]->shape[2];
  int ctot = 0;
  for (auto* x : xs) {
    require(x->shape[1] == h && x->shape[2] == w, ErrKind::invalid_argument,
            "concat: spatial mismatch");
    ctot += x->shape[0];
  }
  Tensor<T> y({ctot, h, w});
  std::size_t off = 0;
  for (auto* x : xs) {
    std::memcpy(y.data() + off, x->data(), x->size() * sizeof(T));
    off += x->size();
  }
  return y;
}

template <class T>
std::vector<Tensor<T>> split_channels(const Tensor<T>& dy, const std::vector<int>& channel_counts) {
  std::vector<Tensor<T>> parts;
  const int h = dy.shape[1], w = dy.shape[2];
  std::size_t off = 0;
  for (int c : channel_counts) {
    Tensor<T> p({c, h, w});
    std::memcpy(p.data(), dy.data() + off, p.size() * sizeof(T));
    off += p.size();
    parts.push_back(std::move(p));
  }
  return parts;
}

// ---------------------------------------------------------------------------
// Two-class pixel softmax: logits (2,H,W) -> foreground probability (H,W).

template <class T>
Tensor<T> softmax2_forward(const Tensor<T>& logits) {
  require(logits.shape.size() == 3 && logits.shape[0] == 2, ErrKind::invalid_argument,
          "softmax2: logits must be (2,H,W)");
  const int h = logits.shape[1], w = logits.shape[2];
  Tensor<T> p({h, w});
  const T* bg = logits.data();
  const T* fg = logits.data() + static_cast<std::size_t>(h) * w;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const T d = fg[i] - bg[i];
    p.v[i] = T(1) / (T(1) + std::exp(-d));
  }
  return p;
}

template <class T>
Tensor<T> softmax2_backward(const Tensor<T>& p, const Tensor<T>& dp) {
  const int h = p.shape[0], w = p.shape[1];
  Tensor<T> dl({2, h, w});
  T* bg = dl.data();
  T* fg = dl.data() + static_cast<std::size_t>(h) * w;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const T g = dp.v[i] * p.v[i] * (T(1) - p.v[i]);
    fg[i] = g;
    bg[i] = -g;
  }
  return dl;
}

// ---------------------------------------------------------------------------
// Scalar helpers shared by the adversarial losses.

template <class T>
T clamp_prob(T p) {
  const T lo = T(1e-7), hi = T(1) - T(1e-7);
  return p < lo ? lo : (p > hi ? hi : p);
}

template <class T>
T sigmoid_s(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

// log(1 + exp(x)), overflow-safe.
template <class T>
T softplus_s(T x) {
  const T m = x > T(0) ? x : T(0);
  return m + std::log(std::exp(x - m) + std::exp(-m));
}

}  // namespace sodgan::nn
