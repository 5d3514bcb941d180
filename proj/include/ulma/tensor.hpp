// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "ulma/errors.hpp"

namespace ulma {

// Dense row-major tensor: a flat buffer plus a shape. Kernels operate on the
// raw buffer; the shape travels with the data for manifests and checkpoints.
template <typename T>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> v;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    v.assign(static_cast<size_t>(numel_of(shape)), T(0));
  }

  static int64_t numel_of(const std::vector<int>& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return n;
  }

  int64_t numel() const { return static_cast<int64_t>(v.size()); }
  T* data() { return v.data(); }
  const T* data() const { return v.data(); }
  bool empty() const { return v.empty(); }

  void fill(T x) { std::fill(v.begin(), v.end(), x); }

  int dim(int i) const { return shape[static_cast<size_t>(i)]; }
};

template <typename T>
using EigenRowMajor = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// C = beta * C + alpha * op(A) * op(B) on row-major buffers.
template <typename T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, T alpha,
          const T* a, const T* b, T beta, T* c) {
  using Map = Eigen::Map<EigenRowMajor<T>>;
  using CMap = Eigen::Map<const EigenRowMajor<T>>;
  Map C(c, m, n);
  auto apply = [&](const auto& prod) {
    if (beta == T(0)) {
      C.noalias() = alpha * prod;
    } else {
      C *= beta;
      C.noalias() += alpha * prod;
    }
  };
  if (!trans_a && !trans_b) {
    apply(CMap(a, m, k) * CMap(b, k, n));
  } else if (trans_a && !trans_b) {
    apply(CMap(a, k, m).transpose() * CMap(b, k, n));
  } else if (!trans_a && trans_b) {
    apply(CMap(a, m, k) * CMap(b, n, k).transpose());
  } else {
    apply(CMap(a, k, m).transpose() * CMap(b, n, k).transpose());
  }
}

// y += x, elementwise over n entries.
template <typename T>
void axpy(int64_t n, T alpha, const T* x, T* y) {
  for (int64_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
bool all_finite(const Tensor<T>& t) {
  for (T x : t.v) {
    if (!std::isfinite(static_cast<double>(x))) return false;
  }
  return true;
}

}  // namespace ulma
