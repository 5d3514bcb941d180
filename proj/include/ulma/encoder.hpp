// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "ulma/errors.hpp"
#include "ulma/rng.hpp"
#include "ulma/tensor.hpp"

namespace ulma {

struct EncoderConfig {
  int num_layers = 4;
  int hidden_size = 64;
  int num_heads = 4;
  int ffn_size = 256;
  int max_positions = 64;
  int vocab_size = 0;
  double dropout_rate = 0.1;

  void validate() const {
    if (num_layers < 1) throw UsageError("encoder: num_layers must be >= 1");
    if (hidden_size < 1 || num_heads < 1 || hidden_size % num_heads != 0) {
      throw UsageError("encoder: hidden_size must be a positive multiple of num_heads");
    }
    if (ffn_size < 1) throw UsageError("encoder: ffn_size must be >= 1");
    if (max_positions < 2) throw UsageError("encoder: max_positions must be >= 2");
    if (vocab_size < 1) throw UsageError("encoder: vocab_size must be >= 1");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
      throw UsageError("encoder: dropout_rate must be in [0, 1)");
    }
  }
};

struct HeadConfig {
  int num_classes = 3;
  int fusion_dim = 0;   // classification head input width
  bool tied_mlm = true; // MLM projection reuses the token embedding when true
};

enum class ParamGroup { kDecay, kNoDecay };

struct DepthTag {
  enum Kind { kEmbedding, kBlock, kHead } kind = kEmbedding;
  int block = 0;  // 1..L when kind == kBlock
};

// Padded token-id matrix with attention mask and (optionally) class labels
// or MLM targets.
struct Batch {
  int batch = 0;
  int seq = 0;
  std::vector<int32_t> token_ids;    // batch*seq
  std::vector<uint8_t> attn_mask;    // batch*seq, 1 = real token
  std::vector<int32_t> labels;       // batch, or empty
  std::vector<int32_t> mlm_targets;  // batch*seq, or empty
  std::vector<uint8_t> mlm_mask;     // batch*seq, or empty

  int32_t id(int b, int t) const { return token_ids[static_cast<size_t>(b) * seq + t]; }
  bool live(int b, int t) const { return attn_mask[static_cast<size_t>(b) * seq + t] != 0; }
};

inline constexpr double kLayerNormEps = 1e-12;
inline constexpr double kGeluC0 = 0.7978845608028654;  // sqrt(2/pi)
inline constexpr double kGeluC1 = 0.044715;

template <typename T>
struct BlockParams {
  Tensor<T> wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor<T> ln1_gain, ln1_bias;
  Tensor<T> w_in, b_in, w_out, b_out;
  Tensor<T> ln2_gain, ln2_bias;
};

template <typename T>
struct Model {
  EncoderConfig cfg;
  HeadConfig head;
  Tensor<T> tok_emb;  // V x H
  Tensor<T> pos_emb;  // max_positions x H
  std::vector<BlockParams<T>> blocks;
  Tensor<T> mlm_w;  // H x V, empty when tied
  Tensor<T> mlm_b;  // V
  Tensor<T> cls_w;  // D x K
  Tensor<T> cls_b;  // K
};

template <typename T>
struct ParamRef {
  std::string name;
  Tensor<T>* tensor;
  ParamGroup group;
  DepthTag depth;
};

// Stable manifest order; checkpoints, the optimizer and gradient checks all
// iterate parameters through this list.
template <typename T>
std::vector<ParamRef<T>> param_refs(Model<T>& m) {
  std::vector<ParamRef<T>> refs;
  const DepthTag emb{DepthTag::kEmbedding, 0};
  const DepthTag head{DepthTag::kHead, 0};
  refs.push_back({"tok_emb", &m.tok_emb, ParamGroup::kDecay, emb});
  refs.push_back({"pos_emb", &m.pos_emb, ParamGroup::kDecay, emb});
  for (int l = 0; l < static_cast<int>(m.blocks.size()); ++l) {
    auto& blk = m.blocks[static_cast<size_t>(l)];
    const DepthTag d{DepthTag::kBlock, l + 1};
    const std::string p = "block" + std::to_string(l + 1) + ".";
    refs.push_back({p + "wq", &blk.wq, ParamGroup::kDecay, d});
    refs.push_back({p + "bq", &blk.bq, ParamGroup::kNoDecay, d});
    refs.push_back({p + "wk", &blk.wk, ParamGroup::kDecay, d});
    refs.push_back({p + "bk", &blk.bk, ParamGroup::kNoDecay, d});
    refs.push_back({p + "wv", &blk.wv, ParamGroup::kDecay, d});
    refs.push_back({p + "bv", &blk.bv, ParamGroup::kNoDecay, d});
    refs.push_back({p + "wo", &blk.wo, ParamGroup::kDecay, d});
    refs.push_back({p + "bo", &blk.bo, ParamGroup::kNoDecay, d});
    refs.push_back({p + "ln1_gain", &blk.ln1_gain, ParamGroup::kNoDecay, d});
    refs.push_back({p + "ln1_bias", &blk.ln1_bias, ParamGroup::kNoDecay, d});
    refs.push_back({p + "w_in", &blk.w_in, ParamGroup::kDecay, d});
    refs.push_back({p + "b_in", &blk.b_in, ParamGroup::kNoDecay, d});
    refs.push_back({p + "w_out", &blk.w_out, ParamGroup::kDecay, d});
    refs.push_back({p + "b_out", &blk.b_out, ParamGroup::kNoDecay, d});
    refs.push_back({p + "ln2_gain", &blk.ln2_gain, ParamGroup::kNoDecay, d});
    refs.push_back({p + "ln2_bias", &blk.ln2_bias, ParamGroup::kNoDecay, d});
  }
  if (!m.mlm_w.empty()) refs.push_back({"mlm_w", &m.mlm_w, ParamGroup::kDecay, head});
  refs.push_back({"mlm_b", &m.mlm_b, ParamGroup::kNoDecay, head});
  refs.push_back({"cls_w", &m.cls_w, ParamGroup::kDecay, head});
  refs.push_back({"cls_b", &m.cls_b, ParamGroup::kNoDecay, head});
  return refs;
}

template <typename T>
struct ConstParamRef {
  std::string name;
  const Tensor<T>* tensor;
  ParamGroup group;
  DepthTag depth;
};

template <typename T>
std::vector<ConstParamRef<T>> param_refs(const Model<T>& m) {
  auto refs = param_refs(const_cast<Model<T>&>(m));
  std::vector<ConstParamRef<T>> out;
  out.reserve(refs.size());
  for (const auto& r : refs) out.push_back({r.name, r.tensor, r.group, r.depth});
  return out;
}

template <typename T>
Model<T> make_model(const EncoderConfig& cfg, const HeadConfig& head) {
  cfg.validate();
  if (head.num_classes < 2) throw UsageError("head: num_classes must be >= 2");
  if (head.fusion_dim < 1) throw UsageError("head: fusion_dim must be >= 1");
  Model<T> m;
  m.cfg = cfg;
  m.head = head;
  const int H = cfg.hidden_size, F = cfg.ffn_size, V = cfg.vocab_size, K = head.num_classes;
  m.tok_emb = Tensor<T>({V, H});
  m.pos_emb = Tensor<T>({cfg.max_positions, H});
  m.blocks.resize(static_cast<size_t>(cfg.num_layers));
  for (auto& blk : m.blocks) {
    blk.wq = Tensor<T>({H, H});
    blk.bq = Tensor<T>({H});
    blk.wk = Tensor<T>({H, H});
    blk.bk = Tensor<T>({H});
    blk.wv = Tensor<T>({H, H});
    blk.bv = Tensor<T>({H});
    blk.wo = Tensor<T>({H, H});
    blk.bo = Tensor<T>({H});
    blk.ln1_gain = Tensor<T>({H});
    blk.ln1_bias = Tensor<T>({H});
    blk.w_in = Tensor<T>({H, F});
    blk.b_in = Tensor<T>({F});
    blk.w_out = Tensor<T>({F, H});
    blk.b_out = Tensor<T>({H});
    blk.ln2_gain = Tensor<T>({H});
    blk.ln2_bias = Tensor<T>({H});
  }
  if (!head.tied_mlm) m.mlm_w = Tensor<T>({H, V});
  m.mlm_b = Tensor<T>({V});
  m.cls_w = Tensor<T>({head.fusion_dim, K});
  m.cls_b = Tensor<T>({K});
  return m;
}

template <typename T>
Model<T> zeros_like(const Model<T>& m) {
  return make_model<T>(m.cfg, m.head);
}

// Weights ~ N(0, 0.02^2); biases zero; LayerNorm gain one, shift zero.
// A single RNG stream consumed in a fixed order makes the result a pure
// function of (config, seed).
template <typename T>
Model<T> init_parameters(const EncoderConfig& cfg, const HeadConfig& head, uint64_t seed) {
  Model<T> m = make_model<T>(cfg, head);
  Rng rng(substream(seed, Stream::kInit));
  auto fill_normal = [&rng](Tensor<T>& t) {
    for (auto& x : t.v) x = static_cast<T>(0.02 * rng.normal());
  };
  fill_normal(m.tok_emb);
  fill_normal(m.pos_emb);
  for (auto& blk : m.blocks) {
    fill_normal(blk.wq);
    fill_normal(blk.wk);
    fill_normal(blk.wv);
    fill_normal(blk.wo);
    fill_normal(blk.w_in);
    fill_normal(blk.w_out);
    blk.ln1_gain.fill(T(1));
    blk.ln2_gain.fill(T(1));
  }
  if (!m.mlm_w.empty()) fill_normal(m.mlm_w);
  fill_normal(m.cls_w);
  return m;
}

// ---------------------------------------------------------------------------
// kernels

// y {R,N} = x {R,M} * w {M,N} + b
template <typename T>
void linear(const T* x, const Tensor<T>& w, const Tensor<T>& b, T* y, int R, int M, int N) {
  gemm<T>(false, false, R, N, M, T(1), x, w.data(), T(0), y);
  for (int r = 0; r < R; ++r) {
    T* row = y + static_cast<int64_t>(r) * N;
    for (int j = 0; j < N; ++j) row[j] += b.v[static_cast<size_t>(j)];
  }
}

// dw += x^T dy; db += column sums of dy; dx += dy w^T (when dx != nullptr)
template <typename T>
void linear_backward(const T* x, const Tensor<T>& w, const T* dy,
                     Tensor<T>& dw, Tensor<T>& db, T* dx, int R, int M, int N) {
  gemm<T>(true, false, M, N, R, T(1), x, dy, T(1), dw.data());
  for (int r = 0; r < R; ++r) {
    const T* row = dy + static_cast<int64_t>(r) * N;
    for (int j = 0; j < N; ++j) db.v[static_cast<size_t>(j)] += row[j];
  }
  if (dx != nullptr) {
    gemm<T>(false, true, R, M, N, T(1), dy, w.data(), T(1), dx);
  }
}

template <typename T>
T gelu(T x) {
  const T u = static_cast<T>(kGeluC0) * (x + static_cast<T>(kGeluC1) * x * x * x);
  return T(0.5) * x * (T(1) + std::tanh(u));
}

template <typename T>
T gelu_grad(T x) {
  const T u = static_cast<T>(kGeluC0) * (x + static_cast<T>(kGeluC1) * x * x * x);
  const T th = std::tanh(u);
  const T du = static_cast<T>(kGeluC0) * (T(1) + T(3) * static_cast<T>(kGeluC1) * x * x);
  return T(0.5) * (T(1) + th) + T(0.5) * x * (T(1) - th * th) * du;
}

// Per-row layer norm over the last dimension. Writes the normalized rows
// (before scale/shift) to xhat and 1/sqrt(var+eps) to inv.
template <typename T>
void layer_norm(const T* x, const Tensor<T>& gain, const Tensor<T>& bias, int rows, int width,
                T* xhat, T* inv, T* out) {
  for (int r = 0; r < rows; ++r) {
    const T* xr = x + static_cast<int64_t>(r) * width;
    T* hr = xhat + static_cast<int64_t>(r) * width;
    T* or_ = out + static_cast<int64_t>(r) * width;
    T mean = 0;
    for (int i = 0; i < width; ++i) mean += xr[i];
    mean /= static_cast<T>(width);
    T var = 0;
    for (int i = 0; i < width; ++i) {
      const T d = xr[i] - mean;
      var += d * d;
    }
    var /= static_cast<T>(width);
    const T iv = T(1) / std::sqrt(var + static_cast<T>(kLayerNormEps));
    inv[r] = iv;
    for (int i = 0; i < width; ++i) {
      hr[i] = (xr[i] - mean) * iv;
      or_[i] = gain.v[static_cast<size_t>(i)] * hr[i] + bias.v[static_cast<size_t>(i)];
    }
  }
}

// dx += LN'(dout); dgain += sum dout.xhat; dbias += sum dout
template <typename T>
void layer_norm_backward(const T* dout, const T* xhat, const T* inv, const Tensor<T>& gain,
                         int rows, int width, Tensor<T>& dgain, Tensor<T>& dbias, T* dx) {
  for (int r = 0; r < rows; ++r) {
    const T* dr = dout + static_cast<int64_t>(r) * width;
    const T* hr = xhat + static_cast<int64_t>(r) * width;
    T* dxr = dx + static_cast<int64_t>(r) * width;
    T sum_dh = 0, sum_dh_h = 0;
    for (int i = 0; i < width; ++i) {
      const T dh = dr[i] * gain.v[static_cast<size_t>(i)];
      sum_dh += dh;
      sum_dh_h += dh * hr[i];
      dgain.v[static_cast<size_t>(i)] += dr[i] * hr[i];
      dbias.v[static_cast<size_t>(i)] += dr[i];
    }
    const T mean_dh = sum_dh / static_cast<T>(width);
    const T mean_dh_h = sum_dh_h / static_cast<T>(width);
    for (int i = 0; i < width; ++i) {
      const T dh = dr[i] * gain.v[static_cast<size_t>(i)];
      dxr[i] += inv[r] * (dh - mean_dh - hr[i] * mean_dh_h);
    }
  }
}

// ---------------------------------------------------------------------------
// forward / backward

template <typename T>
struct BlockActs {
  Tensor<T> q, k, v;            // {B,T,H}
  Tensor<T> probs;              // {B,A,T,T}
  Tensor<T> ctx;                // {B,T,H}
  Tensor<T> attn_drop;          // {B,T,H} multiplicative, empty in eval mode
  Tensor<T> xhat1, inv1;        // {B,T,H}, {B,T}
  Tensor<T> ln1_out;            // {B,T,H}
  Tensor<T> ffn_pre, ffn_act;   // {B,T,F}
  Tensor<T> ffn_drop;           // {B,T,H}
  Tensor<T> xhat2, inv2;        // {B,T,H}, {B,T}
  Tensor<T> out;                // {B,T,H} block output
};

template <typename T>
struct Activations {
  int batch = 0, seq = 0;
  Tensor<T> x0;  // embeddings {B,T,H}
  std::vector<BlockActs<T>> blocks;

  // 1-based block index, matching FusionSpec numbering.
  const Tensor<T>& block_output(int l) const { return blocks[static_cast<size_t>(l - 1)].out; }
  const Tensor<T>& block_input(int l) const {
    return l == 1 ? x0 : blocks[static_cast<size_t>(l - 2)].out;
  }
};

namespace detail {

template <typename T>
using StridedMap = Eigen::Map<EigenRowMajor<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using StridedConstMap = Eigen::Map<const EigenRowMajor<T>, 0, Eigen::OuterStride<>>;

template <typename T>
void dropout_mask(Tensor<T>& mask, double rate, Rng& rng) {
  const T scale = static_cast<T>(1.0 / (1.0 - rate));
  for (auto& x : mask.v) x = rng.uniform() < rate ? T(0) : scale;
}

template <typename T>
void apply_mask_inplace(T* x, const Tensor<T>& mask) {
  if (mask.empty()) return;
  for (int64_t i = 0; i < mask.numel(); ++i) x[i] *= mask.v[static_cast<size_t>(i)];
}

}  // namespace detail

// Runs the full encoder stack, recording every intermediate needed by the
// backward pass. Dropout draws from dropout_seed and is stored as a
// multiplicative mask so backward replays it exactly.
template <typename T>
void encoder_forward(const Model<T>& m, const Batch& batch, bool train_mode,
                     uint64_t dropout_seed, Activations<T>& acts) {
  const EncoderConfig& cfg = m.cfg;
  const int B = batch.batch, Tq = batch.seq, H = cfg.hidden_size;
  const int A = cfg.num_heads, Dh = H / A, F = cfg.ffn_size;
  const int64_t rows = static_cast<int64_t>(B) * Tq;

  if (Tq > cfg.max_positions) {
    throw DataError("sequence length " + std::to_string(Tq) + " exceeds max_positions " +
                    std::to_string(cfg.max_positions));
  }
  for (int32_t id : batch.token_ids) {
    if (id < 0 || id >= cfg.vocab_size) {
      throw DataError("token id " + std::to_string(id) + " outside vocabulary of size " +
                      std::to_string(cfg.vocab_size));
    }
  }

  const bool drop = train_mode && cfg.dropout_rate > 0.0;
  Rng drop_rng(substream(dropout_seed, Stream::kDropout));

  acts.batch = B;
  acts.seq = Tq;
  acts.x0 = Tensor<T>({B, Tq, H});
  for (int b = 0; b < B; ++b) {
    for (int t = 0; t < Tq; ++t) {
      const int32_t id = batch.id(b, t);
      T* row = acts.x0.data() + (static_cast<int64_t>(b) * Tq + t) * H;
      const T* te = m.tok_emb.data() + static_cast<int64_t>(id) * H;
      const T* pe = m.pos_emb.data() + static_cast<int64_t>(t) * H;
      for (int i = 0; i < H; ++i) row[i] = te[i] + pe[i];
    }
  }

  acts.blocks.assign(static_cast<size_t>(cfg.num_layers), BlockActs<T>{});
  const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(Dh)));

  for (int l = 0; l < cfg.num_layers; ++l) {
    const BlockParams<T>& p = m.blocks[static_cast<size_t>(l)];
    BlockActs<T>& a = acts.blocks[static_cast<size_t>(l)];
    const T* xin = (l == 0 ? acts.x0 : acts.blocks[static_cast<size_t>(l - 1)].out).data();

    a.q = Tensor<T>({B, Tq, H});
    a.k = Tensor<T>({B, Tq, H});
    a.v = Tensor<T>({B, Tq, H});
    linear(xin, p.wq, p.bq, a.q.data(), static_cast<int>(rows), H, H);
    linear(xin, p.wk, p.bk, a.k.data(), static_cast<int>(rows), H, H);
    linear(xin, p.wv, p.bv, a.v.data(), static_cast<int>(rows), H, H);

    a.probs = Tensor<T>({B, A, Tq, Tq});
    a.ctx = Tensor<T>({B, Tq, H});
    for (int b = 0; b < B; ++b) {
      for (int h = 0; h < A; ++h) {
        const int64_t off = (static_cast<int64_t>(b) * Tq) * H + h * Dh;
        detail::StridedConstMap<T> Qa(a.q.data() + off, Tq, Dh, Eigen::OuterStride<>(H));
        detail::StridedConstMap<T> Ka(a.k.data() + off, Tq, Dh, Eigen::OuterStride<>(H));
        detail::StridedConstMap<T> Va(a.v.data() + off, Tq, Dh, Eigen::OuterStride<>(H));
        EigenRowMajor<T> S(Tq, Tq);
        S.noalias() = Qa * Ka.transpose() * scale;

        T* P = a.probs.data() + ((static_cast<int64_t>(b) * A + h) * Tq) * Tq;
        for (int t1 = 0; t1 < Tq; ++t1) {
          T maxv = std::numeric_limits<T>::lowest();
          for (int t2 = 0; t2 < Tq; ++t2) {
            if (batch.live(b, t2)) maxv = std::max(maxv, S(t1, t2));
          }
          T sum = 0;
          T* prow = P + static_cast<int64_t>(t1) * Tq;
          for (int t2 = 0; t2 < Tq; ++t2) {
            if (batch.live(b, t2)) {
              prow[t2] = std::exp(S(t1, t2) - maxv);
              sum += prow[t2];
            } else {
              prow[t2] = 0;
            }
          }
          if (sum > 0) {
            for (int t2 = 0; t2 < Tq; ++t2) prow[t2] /= sum;
          }
        }
        Eigen::Map<const EigenRowMajor<T>> Pm(P, Tq, Tq);
        detail::StridedMap<T> Ctx(a.ctx.data() + off, Tq, Dh, Eigen::OuterStride<>(H));
        Ctx.noalias() = Pm * Va;
      }
    }

    Tensor<T> attn({B, Tq, H});
    linear(a.ctx.data(), p.wo, p.bo, attn.data(), static_cast<int>(rows), H, H);
    if (drop) {
      a.attn_drop = Tensor<T>({B, Tq, H});
      detail::dropout_mask(a.attn_drop, cfg.dropout_rate, drop_rng);
      detail::apply_mask_inplace(attn.data(), a.attn_drop);
    }

    Tensor<T> res1({B, Tq, H});
    for (int64_t i = 0; i < rows * H; ++i) res1.v[static_cast<size_t>(i)] = xin[i] + attn.v[static_cast<size_t>(i)];
    a.xhat1 = Tensor<T>({B, Tq, H});
    a.inv1 = Tensor<T>({B, Tq});
    a.ln1_out = Tensor<T>({B, Tq, H});
    layer_norm(res1.data(), p.ln1_gain, p.ln1_bias, static_cast<int>(rows), H,
               a.xhat1.data(), a.inv1.data(), a.ln1_out.data());

    a.ffn_pre = Tensor<T>({B, Tq, F});
    linear(a.ln1_out.data(), p.w_in, p.b_in, a.ffn_pre.data(), static_cast<int>(rows), H, F);
    a.ffn_act = Tensor<T>({B, Tq, F});
    for (int64_t i = 0; i < rows * F; ++i) {
      a.ffn_act.v[static_cast<size_t>(i)] = gelu(a.ffn_pre.v[static_cast<size_t>(i)]);
    }
    Tensor<T> ffn_out({B, Tq, H});
    linear(a.ffn_act.data(), p.w_out, p.b_out, ffn_out.data(), static_cast<int>(rows), F, H);
    if (drop) {
      a.ffn_drop = Tensor<T>({B, Tq, H});
      detail::dropout_mask(a.ffn_drop, cfg.dropout_rate, drop_rng);
      detail::apply_mask_inplace(ffn_out.data(), a.ffn_drop);
    }

    Tensor<T> res2({B, Tq, H});
    for (int64_t i = 0; i < rows * H; ++i) {
      res2.v[static_cast<size_t>(i)] =
          a.ln1_out.v[static_cast<size_t>(i)] + ffn_out.v[static_cast<size_t>(i)];
    }
    a.xhat2 = Tensor<T>({B, Tq, H});
    a.inv2 = Tensor<T>({B, Tq});
    a.out = Tensor<T>({B, Tq, H});
    layer_norm(res2.data(), p.ln2_gain, p.ln2_bias, static_cast<int>(rows), H,
               a.xhat2.data(), a.inv2.data(), a.out.data());
  }
}

// Exact reverse-mode pass. d_block_out holds the upstream gradient on every
// block's output (entries may be empty for zero). Parameter gradients are
// accumulated into `grads`; freezing is the optimizer's business, not ours.
template <typename T>
void encoder_backward(const Model<T>& m, const Batch& batch, const Activations<T>& acts,
                      const std::vector<Tensor<T>>& d_block_out, Model<T>& grads) {
  const EncoderConfig& cfg = m.cfg;
  const int B = batch.batch, Tq = batch.seq, H = cfg.hidden_size;
  const int A = cfg.num_heads, Dh = H / A, F = cfg.ffn_size;
  const int64_t rows = static_cast<int64_t>(B) * Tq;
  if (static_cast<int>(d_block_out.size()) != cfg.num_layers) {
    throw InternalError("encoder_backward: upstream gradient count != num_layers");
  }
  const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(Dh)));

  Tensor<T> g({B, Tq, H});
  for (int l = cfg.num_layers; l >= 1; --l) {
    const BlockParams<T>& p = m.blocks[static_cast<size_t>(l - 1)];
    BlockParams<T>& gp = grads.blocks[static_cast<size_t>(l - 1)];
    const BlockActs<T>& a = acts.blocks[static_cast<size_t>(l - 1)];
    const T* xin = acts.block_input(l).data();

    const Tensor<T>& up = d_block_out[static_cast<size_t>(l - 1)];
    if (!up.empty()) {
      axpy(rows * H, T(1), up.data(), g.data());
    }

    // LN2
    Tensor<T> dres2({B, Tq, H});
    layer_norm_backward(g.data(), a.xhat2.data(), a.inv2.data(), p.ln2_gain,
                        static_cast<int>(rows), H, gp.ln2_gain, gp.ln2_bias, dres2.data());

    // residual: res2 = ln1_out + dropout(ffn_out)
    Tensor<T> d_ffn_out = dres2;
    detail::apply_mask_inplace(d_ffn_out.data(), a.ffn_drop);
    Tensor<T> d_ln1_out = dres2;

    Tensor<T> d_act({B, Tq, F});
    d_act.fill(T(0));
    linear_backward(a.ffn_act.data(), p.w_out, d_ffn_out.data(), gp.w_out, gp.b_out,
                    d_act.data(), static_cast<int>(rows), F, H);
    Tensor<T> d_pre({B, Tq, F});
    for (int64_t i = 0; i < rows * F; ++i) {
      d_pre.v[static_cast<size_t>(i)] =
          d_act.v[static_cast<size_t>(i)] * gelu_grad(a.ffn_pre.v[static_cast<size_t>(i)]);
    }
    linear_backward(a.ln1_out.data(), p.w_in, d_pre.data(), gp.w_in, gp.b_in,
                    d_ln1_out.data(), static_cast<int>(rows), H, F);

    // LN1
    Tensor<T> dres1({B, Tq, H});
    layer_norm_backward(d_ln1_out.data(), a.xhat1.data(), a.inv1.data(), p.ln1_gain,
                        static_cast<int>(rows), H, gp.ln1_gain, gp.ln1_bias, dres1.data());

    // residual: res1 = xin + dropout(attn_out)
    Tensor<T> d_attn = dres1;
    detail::apply_mask_inplace(d_attn.data(), a.attn_drop);
    Tensor<T> g_next = dres1;  // gradient flowing to xin via the residual

    Tensor<T> d_ctx({B, Tq, H});
    d_ctx.fill(T(0));
    linear_backward(a.ctx.data(), p.wo, d_attn.data(), gp.wo, gp.bo, d_ctx.data(),
                    static_cast<int>(rows), H, H);

    Tensor<T> dq({B, Tq, H}), dk({B, Tq, H}), dv({B, Tq, H});
    for (int b = 0; b < B; ++b) {
      for (int h = 0; h < A; ++h) {
        const int64_t off = (static_cast<int64_t>(b) * Tq) * H + h * Dh;
        detail::StridedConstMap<T> Qa(a.q.data() + off, Tq, Dh, Eigen::OuterStride<>(H));
        detail::StridedConstMap<T> Ka(a.k.data() + off, Tq, Dh, Eigen::OuterStride<>(H));
        detail::StridedConstMap<T> Va(a.v.data() + off, Tq, Dh, Eigen::OuterStride<>(H));
        detail::StridedConstMap<T> dCtx(d_ctx.data() + off, Tq, Dh, Eigen::OuterStride<>(H));
        const T* P = a.probs.data() + ((static_cast<int64_t>(b) * A + h) * Tq) * Tq;
        Eigen::Map<const EigenRowMajor<T>> Pm(P, Tq, Tq);

        EigenRowMajor<T> dP(Tq, Tq);
        dP.noalias() = dCtx * Va.transpose();
        detail::StridedMap<T> dVa(dv.data() + off, Tq, Dh, Eigen::OuterStride<>(H));
        dVa.noalias() += Pm.transpose() * dCtx;

        EigenRowMajor<T> dS(Tq, Tq);
        for (int t1 = 0; t1 < Tq; ++t1) {
          T dot = 0;
          for (int t2 = 0; t2 < Tq; ++t2) dot += Pm(t1, t2) * dP(t1, t2);
          for (int t2 = 0; t2 < Tq; ++t2) dS(t1, t2) = Pm(t1, t2) * (dP(t1, t2) - dot);
        }
        detail::StridedMap<T> dQa(dq.data() + off, Tq, Dh, Eigen::OuterStride<>(H));
        detail::StridedMap<T> dKa(dk.data() + off, Tq, Dh, Eigen::OuterStride<>(H));
        dQa.noalias() += scale * (dS * Ka);
        dKa.noalias() += scale * (dS.transpose() * Qa);
      }
    }

    linear_backward(xin, p.wq, dq.data(), gp.wq, gp.bq, g_next.data(),
                    static_cast<int>(rows), H, H);
    linear_backward(xin, p.wk, dk.data(), gp.wk, gp.bk, g_next.data(),
                    static_cast<int>(rows), H, H);
    linear_backward(xin, p.wv, dv.data(), gp.wv, gp.bv, g_next.data(),
                    static_cast<int>(rows), H, H);
    g = std::move(g_next);
  }

  for (int b = 0; b < B; ++b) {
    for (int t = 0; t < Tq; ++t) {
      const int32_t id = batch.id(b, t);
      const T* row = g.data() + (static_cast<int64_t>(b) * Tq + t) * H;
      axpy(static_cast<int64_t>(H), T(1), row, grads.tok_emb.data() + static_cast<int64_t>(id) * H);
      axpy(static_cast<int64_t>(H), T(1), row, grads.pos_emb.data() + static_cast<int64_t>(t) * H);
    }
  }
}

}  // namespace ulma
