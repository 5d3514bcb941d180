// SPDX-License-Identifier: Apache-2.0
#include "ulma/config.hpp"

#include <fstream>
#include <set>

#include "ulma/errors.hpp"

namespace ulma {

FusionSpec RunConfig::fusion_spec() const {
  if (fusion_blocks.empty()) {
    return FusionSpec::last_blocks(encoder.num_layers, 6,
                                   fusion_mode == "add" ? FusionSpec::Mode::kAdd
                                                        : FusionSpec::Mode::kConcatenate);
  }
  FusionSpec f;
  f.block_indices = fusion_blocks;
  f.mode = fusion_mode == "add" ? FusionSpec::Mode::kAdd : FusionSpec::Mode::kConcatenate;
  return f;
}

SmoothingSpec RunConfig::smoothing_spec() const { return {alpha, num_classes}; }

std::vector<std::string> RunConfig::violations() const {
  std::vector<std::string> out;
  auto check = [&out](bool ok, const char* msg) {
    if (!ok) out.push_back(msg);
  };
  check(encoder.num_layers >= 1, "encoder.num_layers must be >= 1");
  check(encoder.hidden_size >= 1 && encoder.num_heads >= 1 &&
            encoder.hidden_size % std::max(1, encoder.num_heads) == 0,
        "encoder.hidden_size must be a positive multiple of encoder.num_heads");
  check(encoder.ffn_size >= 1, "encoder.ffn_size must be >= 1");
  check(encoder.max_positions >= 2, "encoder.max_positions must be >= 2");
  check(encoder.dropout_rate >= 0.0 && encoder.dropout_rate < 1.0,
        "encoder.dropout_rate must be in [0, 1)");
  check(num_classes >= 2, "num_classes must be >= 2");
  check(fusion_mode == "concat" || fusion_mode == "add", "fusion_mode must be concat or add");
  if (!fusion_blocks.empty()) {
    int prev = 0;
    bool ok = true;
    for (int b : fusion_blocks) {
      ok = ok && b >= 1 && b <= encoder.num_layers && b > prev;
      prev = b;
    }
    check(ok, "fusion_blocks must be strictly increasing indices in 1..num_layers");
  }
  check(alpha >= 0.0 && alpha < 1.0, "alpha must be in [0, 1)");
  check(plan.encoder_lr > 0 && plan.head_lr > 0, "learning rates must be > 0");
  check(plan.weight_decay >= 0, "weight_decay must be >= 0");
  check(plan.beta1 >= 0 && plan.beta1 < 1 && plan.beta2 >= 0 && plan.beta2 < 1,
        "betas must be in [0, 1)");
  check(plan.eps > 0, "eps must be > 0");
  check(plan.freeze_epochs >= 0, "freeze_epochs must be >= 0");
  check(plan.layer_decay > 0 && plan.layer_decay <= 1, "layer_decay must be in (0, 1]");
  check(epochs >= 1, "epochs must be >= 1");
  check(batch_size >= 1, "batch_size must be >= 1");
  check(masking.mask_ratio > 0 && masking.mask_ratio < 1, "masking.mask_ratio must be in (0, 1)");
  check(masking.mask_prob >= 0 && masking.random_prob >= 0 && masking.keep_prob >= 0 &&
            std::abs(masking.mask_prob + masking.random_prob + masking.keep_prob - 1.0) <= 1e-9,
        "masking probabilities must be nonnegative and sum to 1");
  check(mlm_steps >= 1, "mlm_steps must be >= 1");
  check(mlm_lr > 0, "mlm_lr must be > 0");
  check(aug_repetitions >= 0, "aug_repetitions must be >= 0");
  check(aug_copies >= 0, "aug_copies must be >= 0");
  check(aug_temperature >= 0, "aug_temperature must be >= 0");
  check(k >= 2, "k must be >= 2");
  check(jobs >= 1, "jobs must be >= 1");
  return out;
}

void RunConfig::validate() const {
  const std::vector<std::string> bad = violations();
  if (bad.empty()) return;
  std::string msg = "invalid configuration:";
  for (const auto& v : bad) msg += "\n  - " + v;
  throw UsageError(msg);
}

namespace {

const std::set<std::string> kKnownKeys = {
    "num_layers",    "hidden_size",   "num_heads",       "ffn_size",
    "max_positions", "dropout_rate",  "num_classes",     "tied_mlm",
    "fusion_blocks", "fusion_mode",   "alpha",           "encoder_lr",
    "head_lr",       "weight_decay",  "beta1",           "beta2",
    "eps",           "warmup_steps",  "freeze_epochs",   "layer_decay",
    "epochs",        "batch_size",    "seed",            "mask_ratio",
    "mask_prob",     "random_prob",   "keep_prob",       "mlm_steps",
    "mlm_lr",        "aug_repetitions", "aug_copies",    "aug_temperature",
    "k",             "jobs"};

template <typename T>
void fetch(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

RunConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw DataError("config: top level must be a JSON object");
  std::string unknown;
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (kKnownKeys.count(it.key()) == 0) unknown += (unknown.empty() ? "" : ", ") + it.key();
  }
  if (!unknown.empty()) throw DataError("config: unknown keys: " + unknown);

  RunConfig cfg;
  try {
    fetch(j, "num_layers", cfg.encoder.num_layers);
    fetch(j, "hidden_size", cfg.encoder.hidden_size);
    fetch(j, "num_heads", cfg.encoder.num_heads);
    fetch(j, "ffn_size", cfg.encoder.ffn_size);
    fetch(j, "max_positions", cfg.encoder.max_positions);
    fetch(j, "dropout_rate", cfg.encoder.dropout_rate);
    fetch(j, "num_classes", cfg.num_classes);
    fetch(j, "tied_mlm", cfg.tied_mlm);
    fetch(j, "fusion_blocks", cfg.fusion_blocks);
    fetch(j, "fusion_mode", cfg.fusion_mode);
    fetch(j, "alpha", cfg.alpha);
    fetch(j, "encoder_lr", cfg.plan.encoder_lr);
    fetch(j, "head_lr", cfg.plan.head_lr);
    fetch(j, "weight_decay", cfg.plan.weight_decay);
    fetch(j, "beta1", cfg.plan.beta1);
    fetch(j, "beta2", cfg.plan.beta2);
    fetch(j, "eps", cfg.plan.eps);
    fetch(j, "warmup_steps", cfg.plan.warmup_steps);
    fetch(j, "freeze_epochs", cfg.plan.freeze_epochs);
    fetch(j, "layer_decay", cfg.plan.layer_decay);
    fetch(j, "epochs", cfg.epochs);
    fetch(j, "batch_size", cfg.batch_size);
    fetch(j, "seed", cfg.seed);
    fetch(j, "mask_ratio", cfg.masking.mask_ratio);
    fetch(j, "mask_prob", cfg.masking.mask_prob);
    fetch(j, "random_prob", cfg.masking.random_prob);
    fetch(j, "keep_prob", cfg.masking.keep_prob);
    fetch(j, "mlm_steps", cfg.mlm_steps);
    fetch(j, "mlm_lr", cfg.mlm_lr);
    fetch(j, "aug_repetitions", cfg.aug_repetitions);
    fetch(j, "aug_copies", cfg.aug_copies);
    fetch(j, "aug_temperature", cfg.aug_temperature);
    fetch(j, "k", cfg.k);
    fetch(j, "jobs", cfg.jobs);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("config: ") + e.what());
  }
  return cfg;
}

nlohmann::json config_to_json(const RunConfig& cfg) {
  return nlohmann::json{{"num_layers", cfg.encoder.num_layers},
                        {"hidden_size", cfg.encoder.hidden_size},
                        {"num_heads", cfg.encoder.num_heads},
                        {"ffn_size", cfg.encoder.ffn_size},
                        {"max_positions", cfg.encoder.max_positions},
                        {"dropout_rate", cfg.encoder.dropout_rate},
                        {"num_classes", cfg.num_classes},
                        {"tied_mlm", cfg.tied_mlm},
                        {"fusion_blocks", cfg.fusion_blocks},
                        {"fusion_mode", cfg.fusion_mode},
                        {"alpha", cfg.alpha},
                        {"encoder_lr", cfg.plan.encoder_lr},
                        {"head_lr", cfg.plan.head_lr},
                        {"weight_decay", cfg.plan.weight_decay},
                        {"beta1", cfg.plan.beta1},
                        {"beta2", cfg.plan.beta2},
                        {"eps", cfg.plan.eps},
                        {"warmup_steps", cfg.plan.warmup_steps},
                        {"freeze_epochs", cfg.plan.freeze_epochs},
                        {"layer_decay", cfg.plan.layer_decay},
                        {"epochs", cfg.epochs},
                        {"batch_size", cfg.batch_size},
                        {"seed", cfg.seed},
                        {"mask_ratio", cfg.masking.mask_ratio},
                        {"mask_prob", cfg.masking.mask_prob},
                        {"random_prob", cfg.masking.random_prob},
                        {"keep_prob", cfg.masking.keep_prob},
                        {"mlm_steps", cfg.mlm_steps},
                        {"mlm_lr", cfg.mlm_lr},
                        {"aug_repetitions", cfg.aug_repetitions},
                        {"aug_copies", cfg.aug_copies},
                        {"aug_temperature", cfg.aug_temperature},
                        {"k", cfg.k},
                        {"jobs", cfg.jobs}};
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": invalid JSON: " + e.what());
  }
  return config_from_json(j);
}

void save_config(const std::string& path, const RunConfig& cfg) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open " + path + " for writing");
  out << config_to_json(cfg).dump(2) << '\n';
  if (!out) throw DataError("write to " + path + " failed");
}

}  // namespace ulma
