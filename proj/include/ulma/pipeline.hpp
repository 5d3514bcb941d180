// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "ulma/dataset.hpp"
#include "ulma/encoder.hpp"
#include "ulma/metrics.hpp"
#include "ulma/objectives.hpp"
#include "ulma/optim.hpp"
#include "ulma/tokenizer.hpp"

namespace ulma {

// Training precision. Checkpoints store float32, so this keeps persistence
// lossless; the gradient checks instantiate the templates with double.
using real = float;

struct MaskingSpec {
  double mask_ratio = 0.15;
  double mask_prob = 0.8;    // replaced by <mask>
  double random_prob = 0.1;  // replaced by a random non-special token
  double keep_prob = 0.1;    // left unchanged

  void validate() const;
};

// In-place masked-token corruption. Eligible positions are unpadded
// non-special tokens; each is selected independently with probability
// mask_ratio, and a sequence with eligible tokens but no selection gets one
// forced pick. Fills mlm_targets/mlm_mask and rewrites token_ids.
void mask_batch(Batch& batch, int vocab_size, const MaskingSpec& spec, uint64_t seed);

struct MlmTuneOptions {
  long long steps = 10000;
  int batch_size = 32;
  double lr = 3e-5;
  double weight_decay = 0.0;
  MaskingSpec masking;
  uint64_t seed = 42;
  long long log_every = 100;  // 0 silences the log
};

// Continues masked-token training of the model on the given documents with a
// uniform constant learning rate. Returns the mean loss over the final
// hundred steps. Logs "step,loss,lr" rows when `log` is given.
double tune_mlm(Model<real>& model, const std::vector<EncodedDoc>& docs,
                const MlmTuneOptions& opts, std::ostream* log);

struct TrainOptions {
  TrainPlan plan;
  FusionSpec fusion;
  SmoothingSpec smoothing;
  int epochs = 10;
  int batch_size = 32;
  uint64_t seed = 42;
  long long log_every = 50;  // 0 silences the log
  // Stop after this many epochs while still scheduling for `epochs`; models an
  // interrupted run that a later resume_from completes. -1 runs to the end.
  int stop_after_epochs = -1;
};

struct TrainResult {
  double best_val_macro_f1 = -1.0;
  int best_epoch = -1;  // 1-based
  EvalReport best_report;
  std::vector<double> val_macro_f1_per_epoch;
  std::vector<double> val_accuracy_per_epoch;
  std::vector<double> train_loss_per_epoch;
  long long global_step = 0;
};

// Epoch loop: shuffle, batch, forward, backward, AdamW with the warmup/decay
// schedule and depth-scaled learning rates; the encoder stays frozen for the
// first plan.freeze_epochs epochs. Validation macro-F1 is measured after
// every epoch. When checkpoint_path is set, the latest state is saved there
// each epoch and the best validation snapshot next to it at
// checkpoint_path + ".best". resume_from restarts mid-run from a checkpoint
// written by this function and continues the exact step sequence.
TrainResult train_classifier(Model<real>& model, const std::vector<EncodedDoc>& train_docs,
                             const std::vector<EncodedDoc>& val_docs, const TrainOptions& opts,
                             std::ostream* log, const std::string& checkpoint_path = "",
                             const std::string& resume_from = "");

std::vector<int> predict(const Model<real>& model, const std::vector<EncodedDoc>& docs,
                         const FusionSpec& fusion, int batch_size);

struct AugmentOptions {
  int repetitions = 5;
  int copies = 1;
  std::vector<Label> classes = {Label::kHate, Label::kOffensive};
  int max_len = 64;
  double temperature = 0.0;  // 0 picks the argmax
  uint64_t seed = 42;
};

// Sequential mask-and-fill over the token sequence: per round one not-yet-
// visited content position is masked and replaced by the model's prediction.
// Returns only the generated variants; sequence length never changes.
std::vector<RawDocument> augment(const Model<real>& model, const Vocabulary& vocab,
                                 const std::vector<RawDocument>& docs,
                                 const AugmentOptions& opts);

// Token-level core of augment(): rewrites up to `repetitions` positions of an
// encoded sequence, each chosen once per cycle, and returns a sequence of the
// same length. temperature 0 takes the argmax over content tokens. When a
// vocabulary is given, replacements keep the word-end marker status of the
// piece they replace, so decoded text never merges or splits words.
std::vector<int32_t> augment_ids(const Model<real>& model, std::vector<int32_t> ids,
                                 int repetitions, double temperature, Rng& rng,
                                 const Vocabulary* vocab = nullptr);

struct KfoldOptions {
  int k = 10;
  int jobs = 1;
  TrainOptions train;
};

struct KfoldResult {
  std::vector<EvalReport> fold_reports;
  double mean_macro_f1 = 0.0;
  double stdev_macro_f1 = 0.0;
};

// Stratified cross-validation. Fold f trains under seed (opts.train.seed + f),
// so results are identical whether folds run sequentially or on `jobs`
// threads. `base` starts every fold from a copy of an existing model
// (typically domain-tuned); nullptr initializes a fresh model per fold.
KfoldResult run_kfold(const Model<real>* base, const EncoderConfig& cfg, const HeadConfig& head,
                      const std::vector<EncodedDoc>& docs, const KfoldOptions& opts,
                      std::ostream* log);

}  // namespace ulma
