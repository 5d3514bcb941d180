// SPDX-License-Identifier: Apache-2.0
#include "ulma/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <deque>
#include <limits>
#include <ostream>
#include <sstream>
#include <thread>

#include "ulma/checkpoint.hpp"
#include "ulma/errors.hpp"
#include "ulma/kfold.hpp"
#include "ulma/rng.hpp"

namespace ulma {

namespace {

void fill_zero(Model<real>& m) {
  for (auto& ref : param_refs(m)) ref.tensor->fill(real(0));
}

std::vector<int> iota_indices(size_t n) {
  std::vector<int> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = static_cast<int>(i);
  return idx;
}

std::vector<int> slice(const std::vector<int>& order, size_t begin, size_t end) {
  return std::vector<int>(order.begin() + static_cast<ptrdiff_t>(begin),
                          order.begin() + static_cast<ptrdiff_t>(end));
}

}  // namespace

void MaskingSpec::validate() const {
  if (!(mask_ratio > 0.0 && mask_ratio < 1.0)) {
    throw UsageError("masking: mask_ratio must be in (0, 1)");
  }
  if (mask_prob < 0.0 || random_prob < 0.0 || keep_prob < 0.0) {
    throw UsageError("masking: replacement probabilities must be >= 0");
  }
  if (std::abs(mask_prob + random_prob + keep_prob - 1.0) > 1e-9) {
    throw UsageError("masking: mask/random/keep probabilities must sum to 1");
  }
}

void mask_batch(Batch& batch, int vocab_size, const MaskingSpec& spec, uint64_t seed) {
  spec.validate();
  if (vocab_size <= Vocabulary::kNumSpecials) {
    throw UsageError("masking: vocabulary has no content tokens");
  }
  const size_t total = static_cast<size_t>(batch.batch) * batch.seq;
  batch.mlm_targets.assign(total, 0);
  batch.mlm_mask.assign(total, 0);
  Rng rng(substream(seed, Stream::kMasking));
  const int64_t content = static_cast<int64_t>(vocab_size) - Vocabulary::kNumSpecials;
  for (int b = 0; b < batch.batch; ++b) {
    std::vector<int> eligible;
    std::vector<int> selected;
    for (int t = 0; t < batch.seq; ++t) {
      if (!batch.live(b, t) || batch.id(b, t) < Vocabulary::kNumSpecials) continue;
      eligible.push_back(t);
      if (rng.uniform() < spec.mask_ratio) selected.push_back(t);
    }
    if (selected.empty() && !eligible.empty()) {
      selected.push_back(eligible[rng.uniform_int(eligible.size())]);
    }
    for (int t : selected) {
      const size_t at = static_cast<size_t>(b) * batch.seq + t;
      batch.mlm_targets[at] = batch.token_ids[at];
      batch.mlm_mask[at] = 1;
      const double roll = rng.uniform();
      if (roll < spec.mask_prob) {
        batch.token_ids[at] = Vocabulary::kMask;
      } else if (roll < spec.mask_prob + spec.random_prob) {
        batch.token_ids[at] = static_cast<int32_t>(
            Vocabulary::kNumSpecials + static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(content))));
      }  // otherwise keep the original token
    }
  }
}

double tune_mlm(Model<real>& model, const std::vector<EncodedDoc>& docs,
                const MlmTuneOptions& opts, std::ostream* log) {
  if (docs.empty()) throw DataError("mlm tuning: no documents");
  if (opts.steps < 1) throw UsageError("mlm tuning: steps must be >= 1");
  if (opts.batch_size < 1) throw UsageError("mlm tuning: batch_size must be >= 1");
  opts.masking.validate();

  TrainPlan plan;
  plan.encoder_lr = opts.lr;
  plan.head_lr = opts.lr;
  plan.weight_decay = opts.weight_decay;
  plan.layer_decay = 1.0;
  plan.freeze_epochs = 0;
  plan.warmup_steps = 0;
  plan.total_steps = opts.steps;
  plan.validate();

  OptimizerState<real> state = make_optimizer_state(model);
  Model<real> grads = zeros_like(model);
  std::vector<Tensor<real>> d_block_out;
  Activations<real> acts;

  const size_t n = docs.size();
  const size_t batches_per_pass = (n + opts.batch_size - 1) / static_cast<size_t>(opts.batch_size);
  std::vector<int> order;
  size_t cursor = 0;
  uint64_t pass = 0;
  long long done = 0;
  long long consecutive_skips = 0;
  std::deque<double> recent;

  while (done < opts.steps) {
    if (cursor >= n) cursor = 0;
    if (cursor == 0) {
      order = iota_indices(n);
      Rng shuffle_rng(substream(opts.seed, Stream::kShuffle, pass++));
      shuffle_rng.shuffle(order);
    }
    const size_t end = std::min(n, cursor + static_cast<size_t>(opts.batch_size));
    Batch batch = make_batch(docs, slice(order, cursor, end), Vocabulary::kPad);
    cursor = end;

    const uint64_t step_seed = substream(opts.seed, Stream::kMasking,
                                         static_cast<uint64_t>(done));
    mask_batch(batch, model.cfg.vocab_size, opts.masking, step_seed);
    bool any_masked = false;
    for (uint8_t m : batch.mlm_mask) any_masked = any_masked || m != 0;
    if (!any_masked) {
      if (++consecutive_skips > static_cast<long long>(batches_per_pass)) {
        throw DataError("mlm tuning: corpus has no maskable tokens");
      }
      continue;
    }
    consecutive_skips = 0;

    const uint64_t drop_seed =
        substream(opts.seed, Stream::kDropout, static_cast<uint64_t>(done));
    encoder_forward(model, batch, true, drop_seed, acts);
    fill_zero(grads);
    d_block_out.assign(static_cast<size_t>(model.cfg.num_layers), Tensor<real>{});
    const double loss = static_cast<double>(mlm_step(model, batch, acts, grads, d_block_out));
    encoder_backward(model, batch, acts, d_block_out, grads);
    adamw_step(model, grads, state, plan, 1.0, false);
    ++done;

    recent.push_back(loss);
    if (recent.size() > 100) recent.pop_front();
    if (log != nullptr && opts.log_every > 0 &&
        (done % opts.log_every == 0 || done == opts.steps)) {
      (*log) << done << ',' << loss << ',' << opts.lr << '\n';
    }
  }
  double sum = 0;
  for (double x : recent) sum += x;
  const double mean = sum / static_cast<double>(recent.size());
  if (log != nullptr) {
    (*log) << "# mlm tuning finished: steps " << done << " mean_recent_loss " << mean << '\n';
  }
  return mean;
}

std::vector<int> predict(const Model<real>& model, const std::vector<EncodedDoc>& docs,
                         const FusionSpec& fusion, int batch_size) {
  if (docs.empty()) throw DataError("predict: no documents");
  if (batch_size < 1) throw UsageError("predict: batch_size must be >= 1");
  fusion.validate(model.cfg.num_layers);
  std::vector<int> preds;
  preds.reserve(docs.size());
  Activations<real> acts;
  const int K = model.head.num_classes;
  for (size_t begin = 0; begin < docs.size(); begin += static_cast<size_t>(batch_size)) {
    const size_t end = std::min(docs.size(), begin + static_cast<size_t>(batch_size));
    std::vector<int> idx;
    for (size_t i = begin; i < end; ++i) idx.push_back(static_cast<int>(i));
    const Batch batch = make_batch(docs, idx, Vocabulary::kPad);
    encoder_forward(model, batch, false, 0, acts);
    const Tensor<real> probs = classify(model, acts, fusion);
    for (int b = 0; b < batch.batch; ++b) {
      const real* row = probs.data() + static_cast<int64_t>(b) * K;
      int best = 0;
      for (int k = 1; k < K; ++k) {
        if (row[k] > row[best]) best = k;
      }
      preds.push_back(best);
    }
  }
  return preds;
}

namespace {

std::vector<int> doc_labels(const std::vector<EncodedDoc>& docs, const char* what) {
  std::vector<int> labels;
  labels.reserve(docs.size());
  for (const auto& d : docs) {
    if (!d.label) throw DataError(std::string(what) + ": unlabeled document in labeled set");
    labels.push_back(static_cast<int>(*d.label));
  }
  return labels;
}

}  // namespace

TrainResult train_classifier(Model<real>& model, const std::vector<EncodedDoc>& train_docs,
                             const std::vector<EncodedDoc>& val_docs, const TrainOptions& opts,
                             std::ostream* log, const std::string& checkpoint_path,
                             const std::string& resume_from) {
  if (train_docs.empty()) throw DataError("training: no training documents");
  if (val_docs.empty()) throw DataError("training: no validation documents");
  if (opts.epochs < 1) throw UsageError("training: epochs must be >= 1");
  if (opts.batch_size < 1) throw UsageError("training: batch_size must be >= 1");

  const std::vector<int> train_labels = doc_labels(train_docs, "training");
  const std::vector<int> val_labels = doc_labels(val_docs, "validation");

  const size_t n = train_docs.size();
  const long long steps_per_epoch =
      static_cast<long long>((n + opts.batch_size - 1) / static_cast<size_t>(opts.batch_size));
  TrainPlan plan = opts.plan;
  plan.total_steps = steps_per_epoch * opts.epochs;
  if (plan.warmup_steps < 0) plan.warmup_steps = default_warmup(steps_per_epoch);
  if (plan.warmup_steps > plan.total_steps) plan.warmup_steps = plan.total_steps;
  plan.validate();

  TrainResult result;
  OptimizerState<real> state;
  int start_epoch = 0;
  if (!resume_from.empty()) {
    nlohmann::json extra;
    model = load_checkpoint<real>(resume_from, &state, &extra);
    start_epoch = extra.value("epochs_completed", 0);
    result.global_step = extra.value("global_step", 0LL);
    result.best_val_macro_f1 = extra.value("best_val_macro_f1", -1.0);
    result.best_epoch = extra.value("best_epoch", -1);
  } else {
    state = make_optimizer_state(model);
  }
  opts.fusion.validate(model.cfg.num_layers);
  if (opts.fusion.fused_dim(model.cfg.hidden_size) != model.head.fusion_dim) {
    throw UsageError("training: fusion width does not match the model head");
  }
  if (opts.smoothing.num_classes != model.head.num_classes) {
    throw UsageError("training: smoothing num_classes does not match the model head");
  }

  Model<real> grads = zeros_like(model);
  std::vector<Tensor<real>> d_block_out;
  Activations<real> acts;

  for (int epoch = start_epoch; epoch < opts.epochs; ++epoch) {
    std::vector<int> order = iota_indices(n);
    Rng shuffle_rng(substream(opts.seed, Stream::kShuffle, static_cast<uint64_t>(epoch)));
    shuffle_rng.shuffle(order);
    const bool head_only = encoder_frozen(plan, epoch);

    double loss_sum = 0;
    long long loss_count = 0;
    for (size_t begin = 0; begin < n; begin += static_cast<size_t>(opts.batch_size)) {
      const size_t end = std::min(n, begin + static_cast<size_t>(opts.batch_size));
      const Batch batch = make_batch(train_docs, slice(order, begin, end), Vocabulary::kPad);
      const uint64_t step_seed =
          substream(opts.seed, Stream::kDropout, static_cast<uint64_t>(result.global_step));
      encoder_forward(model, batch, true, step_seed, acts);
      fill_zero(grads);
      d_block_out.assign(static_cast<size_t>(model.cfg.num_layers), Tensor<real>{});
      const double loss = static_cast<double>(
          classification_step(model, batch, acts, opts.fusion, opts.smoothing, true, step_seed,
                              grads, d_block_out));
      encoder_backward(model, batch, acts, d_block_out, grads);
      const double factor = schedule_lr(result.global_step, plan.warmup_steps, plan.total_steps);
      adamw_step(model, grads, state, plan, factor, head_only);
      ++result.global_step;
      loss_sum += loss;
      ++loss_count;
      if (log != nullptr && opts.log_every > 0 && result.global_step % opts.log_every == 0) {
        (*log) << result.global_step << ',' << loss << ',' << plan.head_lr * factor << '\n';
      }
    }
    result.train_loss_per_epoch.push_back(loss_sum / static_cast<double>(loss_count));

    const std::vector<int> preds = predict(model, val_docs, opts.fusion, opts.batch_size);
    const EvalReport report = evaluate(val_labels, preds, model.head.num_classes);
    result.val_macro_f1_per_epoch.push_back(report.macro_f1);
    result.val_accuracy_per_epoch.push_back(report.accuracy);
    if (log != nullptr) {
      (*log) << "# epoch " << (epoch + 1) << " train_loss " << result.train_loss_per_epoch.back()
             << " val_macro_f1 " << report.macro_f1 << (head_only ? " (encoder frozen)" : "")
             << '\n';
    }
    const bool improved = report.macro_f1 > result.best_val_macro_f1;
    if (improved) {
      result.best_val_macro_f1 = report.macro_f1;
      result.best_epoch = epoch + 1;
      result.best_report = report;
    }
    if (!checkpoint_path.empty()) {
      nlohmann::json extra = {{"epochs_completed", epoch + 1},
                              {"global_step", result.global_step},
                              {"best_val_macro_f1", result.best_val_macro_f1},
                              {"best_epoch", result.best_epoch}};
      save_checkpoint(checkpoint_path, model, &state, extra);
      if (improved) save_checkpoint(checkpoint_path + ".best", model, &state, extra);
    }
    if (opts.stop_after_epochs > 0 && epoch + 1 >= opts.stop_after_epochs) break;
  }
  return result;
}

std::vector<int32_t> augment_ids(const Model<real>& model, std::vector<int32_t> ids,
                                 int repetitions, double temperature, Rng& rng,
                                 const Vocabulary* vocab) {
  if (repetitions < 0) throw UsageError("augment: repetitions must be >= 0");
  if (temperature < 0) throw UsageError("augment: temperature must be >= 0");
  std::vector<int> eligible;
  for (size_t p = 0; p < ids.size(); ++p) {
    if (ids[p] >= Vocabulary::kNumSpecials) eligible.push_back(static_cast<int>(p));
  }
  if (eligible.empty()) return ids;

  const int V = model.cfg.vocab_size;
  // Word-boundary class of each candidate: does the piece close a word?
  std::vector<uint8_t> ends_word;
  if (vocab != nullptr) {
    if (vocab->size() != V) throw UsageError("augment: vocabulary size != model vocab_size");
    const std::string marker = Vocabulary::kWordEnd;
    ends_word.assign(static_cast<size_t>(V), 0);
    for (int j = Vocabulary::kNumSpecials; j < V; ++j) {
      const std::string& tok = vocab->token(j);
      ends_word[static_cast<size_t>(j)] =
          tok.size() >= marker.size() &&
          tok.compare(tok.size() - marker.size(), marker.size(), marker) == 0;
    }
  }
  auto allowed = [&](int j, int original) {
    return ends_word.empty() ||
           ends_word[static_cast<size_t>(j)] == ends_word[static_cast<size_t>(original)];
  };

  std::vector<int> unpicked = eligible;
  Activations<real> acts;
  for (int r = 0; r < repetitions; ++r) {
    if (unpicked.empty()) unpicked = eligible;
    const size_t at = rng.uniform_int(unpicked.size());
    const int p = unpicked[at];
    unpicked.erase(unpicked.begin() + static_cast<ptrdiff_t>(at));
    const int original = static_cast<int>(ids[static_cast<size_t>(p)]);

    Batch batch;
    batch.batch = 1;
    batch.seq = static_cast<int>(ids.size());
    batch.token_ids = ids;
    batch.token_ids[static_cast<size_t>(p)] = Vocabulary::kMask;
    batch.attn_mask.assign(ids.size(), 1);
    encoder_forward(model, batch, false, 0, acts);
    std::vector<real> logits = mlm_position_logits(model, acts, 0, p);

    int choice = -1;
    if (temperature == 0.0) {
      for (int j = Vocabulary::kNumSpecials; j < V; ++j) {
        if (!allowed(j, original)) continue;
        if (choice < 0 || logits[static_cast<size_t>(j)] > logits[static_cast<size_t>(choice)]) {
          choice = j;
        }
      }
    } else {
      double maxv = -std::numeric_limits<double>::infinity();
      for (int j = Vocabulary::kNumSpecials; j < V; ++j) {
        if (!allowed(j, original)) continue;
        maxv = std::max(maxv, static_cast<double>(logits[static_cast<size_t>(j)]));
      }
      if (std::isfinite(maxv)) {
        double sum = 0;
        std::vector<double> weights(static_cast<size_t>(V), 0.0);
        for (int j = Vocabulary::kNumSpecials; j < V; ++j) {
          if (!allowed(j, original)) continue;
          weights[static_cast<size_t>(j)] =
              std::exp((static_cast<double>(logits[static_cast<size_t>(j)]) - maxv) / temperature);
          sum += weights[static_cast<size_t>(j)];
        }
        double roll = rng.uniform() * sum;
        for (int j = Vocabulary::kNumSpecials; j < V; ++j) {
          if (weights[static_cast<size_t>(j)] == 0.0) continue;
          choice = j;
          roll -= weights[static_cast<size_t>(j)];
          if (roll <= 0) break;
        }
      }
    }
    if (choice >= 0) ids[static_cast<size_t>(p)] = static_cast<int32_t>(choice);
  }
  return ids;
}

std::vector<RawDocument> augment(const Model<real>& model, const Vocabulary& vocab,
                                 const std::vector<RawDocument>& docs,
                                 const AugmentOptions& opts) {
  if (opts.copies < 0) throw UsageError("augment: copies must be >= 0");
  std::vector<RawDocument> out;
  for (size_t i = 0; i < docs.size(); ++i) {
    const RawDocument& doc = docs[i];
    if (!doc.label) continue;
    if (std::find(opts.classes.begin(), opts.classes.end(), *doc.label) == opts.classes.end()) {
      continue;
    }
    const CleanDocument clean = clean_document(doc);
    const std::vector<int32_t> ids = encode(vocab, clean.tokens, opts.max_len);
    for (int c = 0; c < opts.copies; ++c) {
      Rng rng(substream(opts.seed, Stream::kAugment,
                        static_cast<uint64_t>(i) * static_cast<uint64_t>(opts.copies) +
                            static_cast<uint64_t>(c)));
      const std::vector<int32_t> new_ids =
          augment_ids(model, ids, opts.repetitions, opts.temperature, rng, &vocab);
      const std::vector<std::string> tokens = decode(vocab, new_ids);
      std::string text;
      for (const auto& tok : tokens) {
        if (!text.empty()) text += ' ';
        text += tok;
      }
      out.push_back({text, doc.label});
    }
  }
  return out;
}

KfoldResult run_kfold(const Model<real>* base, const EncoderConfig& cfg, const HeadConfig& head,
                      const std::vector<EncodedDoc>& docs, const KfoldOptions& opts,
                      std::ostream* log) {
  const std::vector<int> labels = doc_labels(docs, "kfold");
  const std::vector<FoldSplit> folds = stratified_kfold(labels, opts.k, opts.train.seed);

  std::vector<EvalReport> reports(folds.size());
  std::vector<std::string> fold_logs(folds.size());

  auto run_fold = [&](int f) {
    const FoldSplit& split = folds[static_cast<size_t>(f)];
    std::vector<EncodedDoc> train_docs, val_docs;
    train_docs.reserve(split.train_indices.size());
    val_docs.reserve(split.val_indices.size());
    for (int i : split.train_indices) train_docs.push_back(docs[static_cast<size_t>(i)]);
    for (int i : split.val_indices) val_docs.push_back(docs[static_cast<size_t>(i)]);

    TrainOptions fold_opts = opts.train;
    fold_opts.seed = opts.train.seed + static_cast<uint64_t>(f);
    Model<real> model =
        base != nullptr ? *base : init_parameters<real>(cfg, head, fold_opts.seed);

    std::ostringstream fold_log;
    fold_log << "# fold " << f << ": train " << train_docs.size() << " val " << val_docs.size()
             << '\n';
    const TrainResult result =
        train_classifier(model, train_docs, val_docs, fold_opts, &fold_log);
    fold_log << "# fold " << f << " best_val_macro_f1 " << result.best_val_macro_f1 << " (epoch "
             << result.best_epoch << ")\n";
    reports[static_cast<size_t>(f)] = result.best_report;
    fold_logs[static_cast<size_t>(f)] = fold_log.str();
  };

  const int jobs = std::max(1, std::min(opts.jobs, static_cast<int>(folds.size())));
  if (jobs == 1) {
    for (int f = 0; f < static_cast<int>(folds.size()); ++f) run_fold(f);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> workers;
    workers.reserve(static_cast<size_t>(jobs));
    for (int w = 0; w < jobs; ++w) {
      workers.emplace_back([&] {
        for (int f = next.fetch_add(1); f < static_cast<int>(folds.size());
             f = next.fetch_add(1)) {
          run_fold(f);
        }
      });
    }
    for (auto& t : workers) t.join();
  }
  if (log != nullptr) {
    for (const auto& s : fold_logs) (*log) << s;
  }

  KfoldResult result;
  result.fold_reports = reports;
  double sum = 0;
  for (const auto& r : reports) sum += r.macro_f1;
  result.mean_macro_f1 = sum / static_cast<double>(reports.size());
  double ss = 0;
  for (const auto& r : reports) {
    const double d = r.macro_f1 - result.mean_macro_f1;
    ss += d * d;
  }
  result.stdev_macro_f1 =
      reports.size() > 1 ? std::sqrt(ss / static_cast<double>(reports.size() - 1)) : 0.0;
  if (log != nullptr) {
    (*log) << "# kfold mean_macro_f1 " << result.mean_macro_f1 << " stdev "
           << result.stdev_macro_f1 << '\n';
  }
  return result;
}

}  // namespace ulma
