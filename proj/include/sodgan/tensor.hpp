#pragma once

// Dense row-major tensor. Feature maps use (channels, height, width) layout;
// vectors are rank-1. Kept deliberately small: the heavy lifting lives in the
// free functions of nn/ops.hpp.

#include <cstddef>
#include <numeric>
#include <vector>

#include "sodgan/common.hpp"

namespace sodgan {

template <class T>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> v;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    v.assign(count(shape), T(0));
  }
  Tensor(std::vector<int> s, std::vector<T> data) : shape(std::move(s)), v(std::move(data)) {
    require(v.size() == count(shape), ErrKind::invalid_argument, "tensor: data/shape mismatch");
  }

  static std::size_t count(const std::vector<int>& s) {
    std::size_t n = 1;
    for (int d : s) {
      require(d >= 0, ErrKind::invalid_argument, "tensor: negative dim");
      n *= static_cast<std::size_t>(d);
    }
    return n;
  }

  std::size_t size() const { return v.size(); }
  bool empty() const { return v.empty(); }
  T* data() { return v.data(); }
  const T* data() const { return v.data(); }

  int dim(std::size_t i) const { return i < shape.size() ? shape[i] : 1; }

  // (c,h,w) accessors for rank-3 tensors.
  T& at(int c, int y, int x) { return v[(static_cast<std::size_t>(c) * shape[1] + y) * shape[2] + x]; }
  const T& at(int c, int y, int x) const {
    return v[(static_cast<std::size_t>(c) * shape[1] + y) * shape[2] + x];
  }

  T& operator[](std::size_t i) { return v[i]; }
  const T& operator[](std::size_t i) const { return v[i]; }

  void fill(T value) { std::fill(v.begin(), v.end(), value); }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

template <class T>
Tensor<T> zeros_like(const Tensor<T>& t) {
  return Tensor<T>(t.shape);
}

}  // namespace sodgan
