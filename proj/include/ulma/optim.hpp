// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "ulma/encoder.hpp"
#include "ulma/errors.hpp"

namespace ulma {

struct TrainPlan {
  double encoder_lr = 1e-5;
  double head_lr = 1e-4;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long long warmup_steps = -1;  // -1: resolved to ceil(steps_per_epoch / 8)
  long long total_steps = 0;
  int freeze_epochs = 1;
  double layer_decay = 0.9;  // per-block learning-rate ratio, 1 disables

  void validate() const {
    if (encoder_lr <= 0 || head_lr <= 0) throw UsageError("plan: learning rates must be > 0");
    if (weight_decay < 0) throw UsageError("plan: weight_decay must be >= 0");
    if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) {
      throw UsageError("plan: betas must be in [0, 1)");
    }
    if (eps <= 0) throw UsageError("plan: eps must be > 0");
    if (freeze_epochs < 0) throw UsageError("plan: freeze_epochs must be >= 0");
    if (!(layer_decay > 0 && layer_decay <= 1)) {
      throw UsageError("plan: layer_decay must be in (0, 1]");
    }
  }
};

inline long long default_warmup(long long steps_per_epoch) {
  return (steps_per_epoch + 7) / 8;  // ceil of one eighth of an epoch
}

// Linear ramp from zero over `warmup` steps, then linear decay to zero at
// `total`. `step` counts completed optimizer steps (0-based).
inline double schedule_lr(long long step, long long warmup, long long total) {
  if (total < 1) throw UsageError("schedule: total steps must be >= 1");
  if (warmup < 0 || warmup > total) {
    throw UsageError("schedule: warmup must be in [0, total]");
  }
  if (step < 0 || step > total) {
    throw UsageError("schedule: step " + std::to_string(step) + " outside [0, " +
                     std::to_string(total) + "]");
  }
  if (step < warmup) {
    return static_cast<double>(step) / static_cast<double>(warmup);
  }
  const long long tail = total - warmup;
  if (tail == 0) return 0.0;
  return static_cast<double>(total - step) / static_cast<double>(tail);
}

// Peak learning rate for a parameter: the head uses head_lr; block l uses
// encoder_lr * xi^(L - l); the embeddings sit below block 1 at xi^L.
inline double layer_lr(const TrainPlan& plan, const DepthTag& depth, int num_layers) {
  switch (depth.kind) {
    case DepthTag::kHead:
      return plan.head_lr;
    case DepthTag::kBlock:
      return plan.encoder_lr * std::pow(plan.layer_decay, num_layers - depth.block);
    case DepthTag::kEmbedding:
      return plan.encoder_lr * std::pow(plan.layer_decay, num_layers);
  }
  throw InternalError("layer_lr: unknown depth tag");
}

inline bool encoder_frozen(const TrainPlan& plan, int epoch) {
  return epoch < plan.freeze_epochs;
}

template <typename T>
struct OptimizerState {
  Model<T> m;
  Model<T> v;
  long long t = 0;
};

template <typename T>
OptimizerState<T> make_optimizer_state(const Model<T>& model) {
  OptimizerState<T> s;
  s.m = zeros_like(model);
  s.v = zeros_like(model);
  s.t = 0;
  return s;
}

// One decoupled-weight-decay Adam step. lr_scale is the schedule factor for
// this step. Decay applies only to kDecay parameters and uses the pre-step
// weight. When head_only is set, non-head parameters are skipped entirely,
// moments included.
template <typename T>
void adamw_step(Model<T>& model, const Model<T>& grads, OptimizerState<T>& state,
                const TrainPlan& plan, double lr_scale, bool head_only) {
  plan.validate();
  if (lr_scale < 0) throw InternalError("adamw_step: negative schedule factor");
  const long long t = ++state.t;
  const double bc1 = 1.0 - std::pow(plan.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(plan.beta2, static_cast<double>(t));

  auto params = param_refs(model);
  auto gs = param_refs(const_cast<Model<T>&>(grads));
  auto ms = param_refs(state.m);
  auto vs = param_refs(state.v);
  if (gs.size() != params.size() || ms.size() != params.size()) {
    throw InternalError("adamw_step: model and state manifests differ");
  }

  const int L = model.cfg.num_layers;
  for (size_t i = 0; i < params.size(); ++i) {
    const DepthTag depth = params[i].depth;
    if (head_only && depth.kind != DepthTag::kHead) continue;
    const double lr = layer_lr(plan, depth, L) * lr_scale;
    const double wd = params[i].group == ParamGroup::kDecay ? plan.weight_decay : 0.0;
    Tensor<T>& w = *params[i].tensor;
    const Tensor<T>& g = *gs[i].tensor;
    Tensor<T>& m = *ms[i].tensor;
    Tensor<T>& v = *vs[i].tensor;
    if (g.numel() != w.numel()) throw InternalError("adamw_step: gradient shape mismatch");
    for (size_t j = 0; j < w.v.size(); ++j) {
      const double gj = static_cast<double>(g.v[j]);
      const double mj = plan.beta1 * static_cast<double>(m.v[j]) + (1.0 - plan.beta1) * gj;
      const double vj = plan.beta2 * static_cast<double>(v.v[j]) + (1.0 - plan.beta2) * gj * gj;
      m.v[j] = static_cast<T>(mj);
      v.v[j] = static_cast<T>(vj);
      const double mhat = mj / bc1;
      const double vhat = vj / bc2;
      const double w0 = static_cast<double>(w.v[j]);
      w.v[j] = static_cast<T>(w0 - lr * (mhat / (std::sqrt(vhat) + plan.eps)) - lr * wd * w0);
    }
  }
}

}  // namespace ulma
