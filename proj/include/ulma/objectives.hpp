// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "ulma/encoder.hpp"
#include "ulma/errors.hpp"
#include "ulma/tensor.hpp"

namespace ulma {

// Which block outputs feed the classifier, and how they are combined. Block
// indices are 1-based and must be strictly increasing.
struct FusionSpec {
  enum class Mode { kConcatenate, kAdd };

  std::vector<int> block_indices;
  Mode mode = Mode::kConcatenate;

  int fused_dim(int hidden_size) const {
    return mode == Mode::kConcatenate
               ? hidden_size * static_cast<int>(block_indices.size())
               : hidden_size;
  }

  void validate(int num_layers) const {
    if (block_indices.empty()) throw UsageError("fusion: block list must not be empty");
    int prev = 0;
    for (int l : block_indices) {
      if (l < 1 || l > num_layers) {
        throw UsageError("fusion: block index " + std::to_string(l) + " outside 1.." +
                         std::to_string(num_layers));
      }
      if (l <= prev) throw UsageError("fusion: block indices must be strictly increasing");
      prev = l;
    }
  }

  // The default policy: fuse the last min(count, L) blocks.
  static FusionSpec last_blocks(int num_layers, int count = 6,
                                Mode mode = Mode::kConcatenate) {
    FusionSpec f;
    f.mode = mode;
    const int n = std::min(count, num_layers);
    for (int l = num_layers - n + 1; l <= num_layers; ++l) f.block_indices.push_back(l);
    return f;
  }
};

inline const char* fusion_mode_name(FusionSpec::Mode m) {
  return m == FusionSpec::Mode::kConcatenate ? "concat" : "add";
}

struct SmoothingSpec {
  double alpha = 0.2;
  int num_classes = 3;

  void validate() const {
    if (!(alpha >= 0.0 && alpha < 1.0)) throw UsageError("smoothing: alpha must be in [0, 1)");
    if (num_classes < 2) throw UsageError("smoothing: num_classes must be >= 2");
  }
};

// y'_k = y_k * (1 - alpha) + alpha / K for a one-hot y.
template <typename T>
std::vector<T> smooth_labels(const std::vector<T>& onehot, const SmoothingSpec& spec) {
  spec.validate();
  if (static_cast<int>(onehot.size()) != spec.num_classes) {
    throw DataError("smooth_labels: expected " + std::to_string(spec.num_classes) +
                    " entries, got " + std::to_string(onehot.size()));
  }
  int ones = 0;
  for (T y : onehot) {
    if (y == T(1)) {
      ++ones;
    } else if (y != T(0)) {
      throw DataError("smooth_labels: input is not a one-hot vector");
    }
  }
  if (ones != 1) throw DataError("smooth_labels: input is not a one-hot vector");
  std::vector<T> out(onehot.size());
  const T uniform = static_cast<T>(spec.alpha / spec.num_classes);
  for (size_t k = 0; k < onehot.size(); ++k) {
    out[k] = onehot[k] * static_cast<T>(1.0 - spec.alpha) + uniform;
  }
  return out;
}

template <typename T>
std::vector<T> smooth_label_index(int k, const SmoothingSpec& spec) {
  if (k < 0 || k >= spec.num_classes) {
    throw DataError("smooth_label_index: class " + std::to_string(k) + " outside 0.." +
                    std::to_string(spec.num_classes - 1));
  }
  std::vector<T> onehot(static_cast<size_t>(spec.num_classes), T(0));
  onehot[static_cast<size_t>(k)] = T(1);
  return smooth_labels(onehot, spec);
}

// -sum_k t_k log p_k with probabilities floored at 1e-12.
template <typename T>
T cross_entropy(const std::vector<T>& probs, const std::vector<T>& target) {
  if (probs.size() != target.size()) {
    throw DataError("cross_entropy: probability and target lengths differ (" +
                    std::to_string(probs.size()) + " vs " + std::to_string(target.size()) + ")");
  }
  T loss = 0;
  for (size_t k = 0; k < probs.size(); ++k) {
    loss -= target[k] * std::log(std::max(probs[k], static_cast<T>(1e-12)));
  }
  return loss;
}

template <typename T>
void softmax_inplace(T* x, int n) {
  T maxv = x[0];
  for (int i = 1; i < n; ++i) maxv = std::max(maxv, x[i]);
  T sum = 0;
  for (int i = 0; i < n; ++i) {
    x[i] = std::exp(x[i] - maxv);
    sum += x[i];
  }
  for (int i = 0; i < n; ++i) x[i] /= sum;
}

// First-position vectors of the selected blocks, concatenated or summed.
// Shape {B, fused_dim}.
template <typename T>
Tensor<T> fuse_features(const Activations<T>& acts, const FusionSpec& fusion, int hidden_size) {
  const int B = acts.batch, Tq = acts.seq, H = hidden_size;
  const int D = fusion.fused_dim(H);
  Tensor<T> fused({B, D});
  fused.fill(T(0));
  for (int b = 0; b < B; ++b) {
    T* dst = fused.data() + static_cast<int64_t>(b) * D;
    for (size_t j = 0; j < fusion.block_indices.size(); ++j) {
      const Tensor<T>& out = acts.block_output(fusion.block_indices[j]);
      const T* src = out.data() + static_cast<int64_t>(b) * Tq * H;  // position 0
      if (fusion.mode == FusionSpec::Mode::kConcatenate) {
        std::copy(src, src + H, dst + static_cast<int64_t>(j) * H);
      } else {
        for (int i = 0; i < H; ++i) dst[i] += src[i];
      }
    }
  }
  return fused;
}

// Softmax class probabilities {B, K} from already-computed activations.
template <typename T>
Tensor<T> classify(const Model<T>& m, const Activations<T>& acts, const FusionSpec& fusion) {
  const int B = acts.batch, K = m.head.num_classes;
  const int D = fusion.fused_dim(m.cfg.hidden_size);
  if (D != m.head.fusion_dim) throw InternalError("classify: fusion width != head fusion_dim");
  Tensor<T> fused = fuse_features(acts, fusion, m.cfg.hidden_size);
  Tensor<T> probs({B, K});
  linear(fused.data(), m.cls_w, m.cls_b, probs.data(), B, D, K);
  for (int b = 0; b < B; ++b) softmax_inplace(probs.data() + static_cast<int64_t>(b) * K, K);
  return probs;
}

namespace detail {

template <typename T>
void ensure_zeros(Tensor<T>& t, const std::vector<int>& shape) {
  if (t.empty()) {
    t = Tensor<T>(shape);
    t.fill(T(0));
  }
}

}  // namespace detail

// Mean smoothed cross-entropy over the batch. Accumulates head-parameter
// gradients into `grads` and the gradient on each fused block's output into
// d_block_out (allocating entries as needed). Returns the loss.
template <typename T>
T classification_step(const Model<T>& m, const Batch& batch, const Activations<T>& acts,
                      const FusionSpec& fusion, const SmoothingSpec& smoothing,
                      bool train_mode, uint64_t dropout_seed, Model<T>& grads,
                      std::vector<Tensor<T>>& d_block_out) {
  const int B = acts.batch, Tq = acts.seq, H = m.cfg.hidden_size, K = m.head.num_classes;
  const int D = fusion.fused_dim(H);
  fusion.validate(m.cfg.num_layers);
  if (D != m.head.fusion_dim) {
    throw InternalError("classification_step: fusion width != head fusion_dim");
  }
  if (static_cast<int>(batch.labels.size()) != B) {
    throw DataError("classification_step: batch carries " + std::to_string(batch.labels.size()) +
                    " labels for " + std::to_string(B) + " rows");
  }
  if (smoothing.num_classes != K) {
    throw InternalError("classification_step: smoothing num_classes != head num_classes");
  }

  Tensor<T> fused = fuse_features(acts, fusion, H);
  Tensor<T> drop_mask;
  if (train_mode && m.cfg.dropout_rate > 0.0) {
    drop_mask = Tensor<T>({B, D});
    Rng rng(substream(dropout_seed, Stream::kDropout, 1));
    detail::dropout_mask(drop_mask, m.cfg.dropout_rate, rng);
    detail::apply_mask_inplace(fused.data(), drop_mask);
  }

  Tensor<T> probs({B, K});
  linear(fused.data(), m.cls_w, m.cls_b, probs.data(), B, D, K);
  for (int b = 0; b < B; ++b) softmax_inplace(probs.data() + static_cast<int64_t>(b) * K, K);

  T loss = 0;
  Tensor<T> d_logits({B, K});
  for (int b = 0; b < B; ++b) {
    const int32_t label = batch.labels[static_cast<size_t>(b)];
    const std::vector<T> target = smooth_label_index<T>(label, smoothing);
    const T* p = probs.data() + static_cast<int64_t>(b) * K;
    loss += cross_entropy(std::vector<T>(p, p + K), target);
    T* dl = d_logits.data() + static_cast<int64_t>(b) * K;
    for (int k = 0; k < K; ++k) dl[k] = (p[k] - target[static_cast<size_t>(k)]) / static_cast<T>(B);
  }
  loss /= static_cast<T>(B);

  Tensor<T> d_fused({B, D});
  d_fused.fill(T(0));
  linear_backward(fused.data(), m.cls_w, d_logits.data(), grads.cls_w, grads.cls_b,
                  d_fused.data(), B, D, K);
  detail::apply_mask_inplace(d_fused.data(), drop_mask);

  if (static_cast<int>(d_block_out.size()) != m.cfg.num_layers) {
    d_block_out.assign(static_cast<size_t>(m.cfg.num_layers), Tensor<T>{});
  }
  for (size_t j = 0; j < fusion.block_indices.size(); ++j) {
    const int l = fusion.block_indices[j];
    Tensor<T>& d_out = d_block_out[static_cast<size_t>(l - 1)];
    detail::ensure_zeros(d_out, {B, Tq, H});
    for (int b = 0; b < B; ++b) {
      const T* src = d_fused.data() + static_cast<int64_t>(b) * D +
                     (fusion.mode == FusionSpec::Mode::kConcatenate
                          ? static_cast<int64_t>(j) * H
                          : 0);
      axpy(static_cast<int64_t>(H), T(1), src, d_out.data() + static_cast<int64_t>(b) * Tq * H);
    }
  }
  return loss;
}

namespace detail {

// Rows of the final block output at masked positions, with their targets.
template <typename T>
struct MaskedRows {
  std::vector<std::pair<int, int>> where;  // (b, t)
  Tensor<T> x;                             // {M, H}
  std::vector<int32_t> targets;            // M
};

template <typename T>
MaskedRows<T> gather_masked(const Batch& batch, const Activations<T>& acts, int hidden_size) {
  MaskedRows<T> rows;
  if (batch.mlm_mask.size() != static_cast<size_t>(batch.batch) * batch.seq ||
      batch.mlm_targets.size() != batch.mlm_mask.size()) {
    throw DataError("mlm step: batch lacks masking metadata");
  }
  for (int b = 0; b < batch.batch; ++b) {
    for (int t = 0; t < batch.seq; ++t) {
      if (batch.mlm_mask[static_cast<size_t>(b) * batch.seq + t] != 0) rows.where.push_back({b, t});
    }
  }
  const int M = static_cast<int>(rows.where.size());
  if (M == 0) throw DataError("mlm step: batch has no masked positions");
  rows.x = Tensor<T>({M, hidden_size});
  rows.targets.resize(static_cast<size_t>(M));
  const Tensor<T>& h = acts.blocks.back().out;
  for (int i = 0; i < M; ++i) {
    const auto [b, t] = rows.where[static_cast<size_t>(i)];
    const T* src = h.data() + (static_cast<int64_t>(b) * batch.seq + t) * hidden_size;
    std::copy(src, src + hidden_size, rows.x.data() + static_cast<int64_t>(i) * hidden_size);
    rows.targets[static_cast<size_t>(i)] = batch.mlm_targets[static_cast<size_t>(b) * batch.seq + t];
  }
  return rows;
}

// logits {M, V} = x {M, H} * W + b where W is tok_emb^T when tied.
template <typename T>
Tensor<T> mlm_logits(const Model<T>& m, const Tensor<T>& x, int M) {
  const int H = m.cfg.hidden_size, V = m.cfg.vocab_size;
  Tensor<T> logits({M, V});
  if (m.head.tied_mlm) {
    gemm<T>(false, true, M, V, H, T(1), x.data(), m.tok_emb.data(), T(0), logits.data());
  } else {
    gemm<T>(false, false, M, V, H, T(1), x.data(), m.mlm_w.data(), T(0), logits.data());
  }
  for (int i = 0; i < M; ++i) {
    T* row = logits.data() + static_cast<int64_t>(i) * V;
    for (int j = 0; j < V; ++j) row[j] += m.mlm_b.v[static_cast<size_t>(j)];
  }
  return logits;
}

}  // namespace detail

// Mean masked-token cross-entropy. Gradients flow into the projection (the
// token embedding itself when tied) and into the final block's output.
template <typename T>
T mlm_step(const Model<T>& m, const Batch& batch, const Activations<T>& acts, Model<T>& grads,
           std::vector<Tensor<T>>& d_block_out) {
  const int H = m.cfg.hidden_size, V = m.cfg.vocab_size, L = m.cfg.num_layers;
  auto rows = detail::gather_masked(batch, acts, H);
  const int M = static_cast<int>(rows.where.size());

  Tensor<T> probs = detail::mlm_logits(m, rows.x, M);
  T loss = 0;
  for (int i = 0; i < M; ++i) {
    T* row = probs.data() + static_cast<int64_t>(i) * V;
    softmax_inplace(row, V);
    const int32_t tgt = rows.targets[static_cast<size_t>(i)];
    if (tgt < 0 || tgt >= V) {
      throw DataError("mlm step: target id " + std::to_string(tgt) + " outside vocabulary");
    }
    loss -= std::log(std::max(row[tgt], static_cast<T>(1e-12)));
  }
  loss /= static_cast<T>(M);

  // d_logits = (softmax - onehot) / M, reusing the probs buffer
  for (int i = 0; i < M; ++i) {
    T* row = probs.data() + static_cast<int64_t>(i) * V;
    row[rows.targets[static_cast<size_t>(i)]] -= T(1);
    for (int j = 0; j < V; ++j) row[j] /= static_cast<T>(M);
  }

  for (int i = 0; i < M; ++i) {
    const T* row = probs.data() + static_cast<int64_t>(i) * V;
    for (int j = 0; j < V; ++j) grads.mlm_b.v[static_cast<size_t>(j)] += row[j];
  }
  Tensor<T> dx({M, H});
  if (m.head.tied_mlm) {
    gemm<T>(true, false, V, H, M, T(1), probs.data(), rows.x.data(), T(1), grads.tok_emb.data());
    gemm<T>(false, false, M, H, V, T(1), probs.data(), m.tok_emb.data(), T(0), dx.data());
  } else {
    gemm<T>(true, false, H, V, M, T(1), rows.x.data(), probs.data(), T(1), grads.mlm_w.data());
    gemm<T>(false, true, M, H, V, T(1), probs.data(), m.mlm_w.data(), T(0), dx.data());
  }

  if (static_cast<int>(d_block_out.size()) != L) {
    d_block_out.assign(static_cast<size_t>(L), Tensor<T>{});
  }
  Tensor<T>& d_last = d_block_out[static_cast<size_t>(L - 1)];
  detail::ensure_zeros(d_last, {batch.batch, batch.seq, H});
  for (int i = 0; i < M; ++i) {
    const auto [b, t] = rows.where[static_cast<size_t>(i)];
    axpy(static_cast<int64_t>(H), T(1), dx.data() + static_cast<int64_t>(i) * H,
         d_last.data() + (static_cast<int64_t>(b) * batch.seq + t) * H);
  }
  return loss;
}

// Loss only, no gradient bookkeeping.
template <typename T>
T mlm_loss_eval(const Model<T>& m, const Batch& batch, const Activations<T>& acts) {
  const int H = m.cfg.hidden_size, V = m.cfg.vocab_size;
  auto rows = detail::gather_masked(batch, acts, H);
  const int M = static_cast<int>(rows.where.size());
  Tensor<T> logits = detail::mlm_logits(m, rows.x, M);
  T loss = 0;
  for (int i = 0; i < M; ++i) {
    T* row = logits.data() + static_cast<int64_t>(i) * V;
    softmax_inplace(row, V);
    loss -= std::log(std::max(row[rows.targets[static_cast<size_t>(i)]], static_cast<T>(1e-12)));
  }
  return loss / static_cast<T>(M);
}

// Vocabulary logits for one position of the final block, used by the
// mask-and-fill augmenter.
template <typename T>
std::vector<T> mlm_position_logits(const Model<T>& m, const Activations<T>& acts, int b, int t) {
  const int H = m.cfg.hidden_size, V = m.cfg.vocab_size;
  Tensor<T> x({1, H});
  const Tensor<T>& h = acts.blocks.back().out;
  const T* src = h.data() + (static_cast<int64_t>(b) * acts.seq + t) * H;
  std::copy(src, src + H, x.data());
  Tensor<T> logits = detail::mlm_logits(m, x, 1);
  return std::vector<T>(logits.data(), logits.data() + V);
}

}  // namespace ulma
