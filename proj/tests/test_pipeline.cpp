// SPDX-License-Identifier: Apache-2.0
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "ulma/dataset.hpp"
#include "ulma/errors.hpp"
#include "ulma/pipeline.hpp"
#include "ulma/rng.hpp"
#include "ulma/synth.hpp"
#include "ulma/text.hpp"
#include "ulma/tokenizer.hpp"

using ulma::Batch;
using ulma::EncodedDoc;
using ulma::Label;
using ulma::MaskingSpec;
using ulma::real;
using ulma::Vocabulary;

namespace {

Batch content_batch(ulma::Rng& rng, int rows, int seq, int vocab_size, int pad_tail) {
  Batch b;
  b.batch = rows;
  b.seq = seq;
  b.token_ids.assign(static_cast<size_t>(rows) * seq, Vocabulary::kPad);
  b.attn_mask.assign(static_cast<size_t>(rows) * seq, 0);
  for (int r = 0; r < rows; ++r) {
    const int live = seq - (r % 3 == 0 ? pad_tail : 0);
    for (int t = 0; t < live; ++t) {
      const size_t at = static_cast<size_t>(r) * seq + t;
      b.attn_mask[at] = 1;
      if (t == 0) {
        b.token_ids[at] = Vocabulary::kBos;
      } else if (t == live - 1) {
        b.token_ids[at] = Vocabulary::kEos;
      } else {
        b.token_ids[at] = static_cast<int32_t>(
            Vocabulary::kNumSpecials + rng.uniform_int(static_cast<uint64_t>(
                                           vocab_size - Vocabulary::kNumSpecials)));
      }
    }
  }
  return b;
}

struct TinyTask {
  Vocabulary vocab;
  std::vector<EncodedDoc> train;
  std::vector<EncodedDoc> val;
  ulma::EncoderConfig cfg;
  ulma::HeadConfig head;
};

TinyTask make_task(int train_docs, int val_docs, uint64_t seed) {
  ulma::SynthSpec spec;
  const int total = train_docs + val_docs;
  spec.num_hate = total / 5 + 2;
  spec.num_offensive = total / 5 + 2;
  spec.num_clean = total - spec.num_hate - spec.num_offensive;
  spec.seed = seed;
  const auto raw = ulma::generate_synthetic(spec);
  std::vector<std::vector<std::string>> token_corpus;
  std::vector<ulma::RawDocument> cleaned;
  for (const auto& d : raw) {
    const auto c = ulma::clean_document(d);
    token_corpus.push_back(c.tokens);
  }
  TinyTask task;
  task.vocab = ulma::build_vocab(token_corpus, 220);
  std::vector<EncodedDoc> all;
  for (const auto& d : raw) {
    const auto c = ulma::clean_document(d);
    EncodedDoc e;
    e.ids = ulma::encode(task.vocab, c.tokens, 32);
    e.label = c.label;
    all.push_back(e);
  }
  task.train.assign(all.begin(), all.begin() + train_docs);
  task.val.assign(all.begin() + train_docs, all.end());
  task.cfg.num_layers = 2;
  task.cfg.hidden_size = 16;
  task.cfg.num_heads = 2;
  task.cfg.ffn_size = 32;
  task.cfg.max_positions = 32;
  task.cfg.vocab_size = task.vocab.size();
  task.cfg.dropout_rate = 0.1;
  task.head.num_classes = 3;
  task.head.fusion_dim = ulma::FusionSpec::last_blocks(2).fused_dim(16);
  return task;
}

ulma::TrainOptions tiny_train_options(int epochs) {
  ulma::TrainOptions opts;
  opts.plan.encoder_lr = 1e-3;
  opts.plan.head_lr = 3e-3;
  opts.plan.freeze_epochs = 1;
  opts.fusion = ulma::FusionSpec::last_blocks(2);
  opts.smoothing = {0.2, 3};
  opts.epochs = epochs;
  opts.batch_size = 16;
  opts.seed = 77;
  opts.log_every = 0;
  return opts;
}

}  // namespace

TEST_CASE("masking hits the configured rate with the 80/10/10 replacement mix") {
  const int vocab_size = 1000;
  MaskingSpec spec;
  long long eligible = 0, selected = 0, masked = 0, randomized = 0, kept = 0;
  ulma::Rng gen(1);
  for (uint64_t round = 0; round < 20; ++round) {
    Batch batch = content_batch(gen, 100, 64, vocab_size, 12);
    const Batch before = batch;
    ulma::mask_batch(batch, vocab_size, spec, 1000 + round);
    for (int b = 0; b < batch.batch; ++b) {
      bool row_eligible = false, row_selected = false;
      for (int t = 0; t < batch.seq; ++t) {
        const size_t at = static_cast<size_t>(b) * batch.seq + t;
        const bool can = before.live(b, t) && before.id(b, t) >= Vocabulary::kNumSpecials;
        row_eligible = row_eligible || can;
        if (!can) {
          CHECK(batch.mlm_mask[at] == 0);  // specials and padding are never selected
          CHECK(batch.token_ids[at] == before.token_ids[at]);
          continue;
        }
        ++eligible;
        if (!batch.mlm_mask[at]) {
          CHECK(batch.token_ids[at] == before.token_ids[at]);
          continue;
        }
        ++selected;
        row_selected = true;
        CHECK(batch.mlm_targets[at] == before.token_ids[at]);
        if (batch.token_ids[at] == Vocabulary::kMask) {
          ++masked;
        } else if (batch.token_ids[at] == before.token_ids[at]) {
          ++kept;
        } else {
          ++randomized;
          CHECK(batch.token_ids[at] >= Vocabulary::kNumSpecials);
          CHECK(batch.token_ids[at] < vocab_size);
        }
      }
      if (row_eligible) CHECK(row_selected);  // forced pick
    }
  }
  REQUIRE(eligible >= 100000);
  const double fraction = double(selected) / double(eligible);
  CHECK(fraction >= 0.14);
  CHECK(fraction <= 0.16);
  CHECK(double(masked) / double(selected) == doctest::Approx(0.8).epsilon(0.0125));
  CHECK(double(randomized) / double(selected) == doctest::Approx(0.1).epsilon(0.1));
  CHECK(double(kept) / double(selected) == doctest::Approx(0.1).epsilon(0.1));
}

TEST_CASE("masking leaves all-special rows alone instead of failing") {
  Batch batch;
  batch.batch = 1;
  batch.seq = 4;
  batch.token_ids = {Vocabulary::kBos, Vocabulary::kEos, Vocabulary::kPad, Vocabulary::kPad};
  batch.attn_mask = {1, 1, 0, 0};
  ulma::mask_batch(batch, 100, MaskingSpec{}, 5);
  for (int32_t m : batch.mlm_mask) CHECK(m == 0);
}

TEST_CASE("masking is deterministic per seed") {
  ulma::Rng gen(2);
  Batch a = content_batch(gen, 4, 16, 50, 3);
  Batch b = a;
  Batch c = a;
  ulma::mask_batch(a, 50, MaskingSpec{}, 9);
  ulma::mask_batch(b, 50, MaskingSpec{}, 9);
  ulma::mask_batch(c, 50, MaskingSpec{}, 10);
  CHECK(a.token_ids == b.token_ids);
  CHECK(a.mlm_mask == b.mlm_mask);
  CHECK(a.mlm_targets == b.mlm_targets);
  CHECK(a.token_ids != c.token_ids);
}

TEST_CASE("masking validates its specification") {
  Batch batch;
  batch.batch = 1;
  batch.seq = 2;
  batch.token_ids = {8, 9};
  batch.attn_mask = {1, 1};
  MaskingSpec bad;
  bad.mask_ratio = 0.0;
  CHECK_THROWS_AS(ulma::mask_batch(batch, 100, bad, 1), ulma::UsageError);
  MaskingSpec unnormalized;
  unnormalized.mask_prob = 0.5;
  CHECK_THROWS_AS(ulma::mask_batch(batch, 100, unnormalized, 1), ulma::UsageError);
  CHECK_THROWS_AS(ulma::mask_batch(batch, Vocabulary::kNumSpecials, MaskingSpec{}, 1),
                  ulma::UsageError);
}

TEST_CASE("domain tuning lowers the masked-token loss") {
  TinyTask task = make_task(60, 10, 13);
  auto model = ulma::init_parameters<real>(task.cfg, task.head, 5);
  ulma::MlmTuneOptions opts;
  opts.steps = 120;
  opts.batch_size = 8;
  opts.lr = 3e-3;
  opts.seed = 3;
  opts.log_every = 1;
  std::ostringstream log;
  const double final_loss = ulma::tune_mlm(model, task.train, opts, &log);
  CHECK(final_loss > 0.0);

  // Parse "step,loss,lr" rows; compare the first ten to the last ten.
  std::istringstream rows(log.str());
  std::vector<double> losses;
  std::string line;
  while (std::getline(rows, line)) {
    if (line.empty() || line[0] == '#') continue;
    const size_t c1 = line.find(','), c2 = line.rfind(',');
    REQUIRE(c1 != std::string::npos);
    REQUIRE(c2 > c1);
    losses.push_back(std::stod(line.substr(c1 + 1, c2 - c1 - 1)));
  }
  REQUIRE(losses.size() == 120);
  double head = 0, tail = 0;
  for (size_t i = 0; i < 10; ++i) {
    head += losses[i];
    tail += losses[losses.size() - 10 + i];
  }
  CHECK(tail / 10 < head / 10);
}

TEST_CASE("classifier training is deterministic given the seed") {
  TinyTask task = make_task(48, 16, 21);
  const auto init = ulma::init_parameters<real>(task.cfg, task.head, 9);
  const auto opts = tiny_train_options(2);

  auto m1 = init;
  auto m2 = init;
  const auto r1 = ulma::train_classifier(m1, task.train, task.val, opts, nullptr);
  const auto r2 = ulma::train_classifier(m2, task.train, task.val, opts, nullptr);
  CHECK(r1.train_loss_per_epoch == r2.train_loss_per_epoch);
  CHECK(r1.val_macro_f1_per_epoch == r2.val_macro_f1_per_epoch);
  CHECK(r1.global_step == r2.global_step);
  CHECK(r1.global_step == 2 * ((48 + 15) / 16));
  auto p1 = ulma::param_refs(m1);
  auto p2 = ulma::param_refs(m2);
  for (size_t i = 0; i < p1.size(); ++i) CHECK(p1[i].tensor->v == p2[i].tensor->v);
}

TEST_CASE("an interrupted run resumed from its checkpoint matches the straight run") {
  TinyTask task = make_task(48, 16, 31);
  const auto init = ulma::init_parameters<real>(task.cfg, task.head, 19);
  const std::string ck_a = "./resume_a.ckpt", ck_b = "./resume_b.ckpt";

  auto straight = init;
  auto opts = tiny_train_options(4);
  const auto ra = ulma::train_classifier(straight, task.train, task.val, opts, nullptr, ck_a);

  auto interrupted = init;
  auto phase1 = opts;
  phase1.stop_after_epochs = 2;
  ulma::train_classifier(interrupted, task.train, task.val, phase1, nullptr, ck_b);
  auto resumed = ulma::init_parameters<real>(task.cfg, task.head, 999);  // overwritten by load
  const auto rb =
      ulma::train_classifier(resumed, task.train, task.val, opts, nullptr, ck_b, ck_b);

  REQUIRE(ra.val_macro_f1_per_epoch.size() == 4);
  REQUIRE(rb.val_macro_f1_per_epoch.size() == 2);
  CHECK(rb.val_macro_f1_per_epoch[0] == ra.val_macro_f1_per_epoch[2]);
  CHECK(rb.val_macro_f1_per_epoch[1] == ra.val_macro_f1_per_epoch[3]);
  CHECK(rb.best_val_macro_f1 == ra.best_val_macro_f1);
  CHECK(rb.global_step == ra.global_step);

  // The final checkpoints of both histories are byte-identical.
  auto slurp = [](const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  };
  CHECK(slurp(ck_a) == slurp(ck_b));
  for (const auto& p : {ck_a, ck_b, ck_a + ".best", ck_b + ".best"}) std::remove(p.c_str());
}

TEST_CASE("training respects frozen epochs end to end") {
  TinyTask task = make_task(32, 8, 41);
  const auto init = ulma::init_parameters<real>(task.cfg, task.head, 29);
  auto model = init;
  auto opts = tiny_train_options(1);
  opts.plan.freeze_epochs = 1;  // the single epoch trains the head only
  ulma::train_classifier(model, task.train, task.val, opts, nullptr);
  CHECK(model.tok_emb.v == init.tok_emb.v);
  CHECK(model.blocks[0].wq.v == init.blocks[0].wq.v);
  CHECK(model.cls_w.v != init.cls_w.v);
}

TEST_CASE("prediction returns one class per document, deterministically") {
  TinyTask task = make_task(24, 12, 51);
  const auto model = ulma::init_parameters<real>(task.cfg, task.head, 7);
  const auto fusion = ulma::FusionSpec::last_blocks(2);
  const auto a = ulma::predict(model, task.val, fusion, 5);
  const auto b = ulma::predict(model, task.val, fusion, 3);  // batch split must not matter
  REQUIRE(a.size() == task.val.size());
  CHECK(a == b);
  for (int p : a) {
    CHECK(p >= 0);
    CHECK(p < 3);
  }
}

TEST_CASE("sequence rewriting edits at most the requested number of tokens") {
  TinyTask task = make_task(20, 6, 61);
  const auto model = ulma::init_parameters<real>(task.cfg, task.head, 3);
  const auto& doc = task.train.front();
  REQUIRE(doc.ids.size() >= 4);

  ulma::Rng zero_rng(1);
  const auto same = ulma::augment_ids(model, doc.ids, 0, 0.0, zero_rng);
  CHECK(same == doc.ids);  // zero repetitions is the identity

  for (int reps : {1, 3, 8}) {
    ulma::Rng rng(2);
    const auto out = ulma::augment_ids(model, doc.ids, reps, 0.0, rng);
    REQUIRE(out.size() == doc.ids.size());
    int edits = 0;
    for (size_t i = 0; i < out.size(); ++i) {
      if (out[i] != doc.ids[i]) {
        ++edits;
        CHECK(doc.ids[i] >= Vocabulary::kNumSpecials);  // specials never rewritten
      }
    }
    CHECK(edits <= reps);
  }

  ulma::Rng r1(5), r2(5), r3(6);
  const auto o1 = ulma::augment_ids(model, doc.ids, 4, 0.7, r1);
  const auto o2 = ulma::augment_ids(model, doc.ids, 4, 0.7, r2);
  const auto o3 = ulma::augment_ids(model, doc.ids, 4, 0.7, r3);
  CHECK(o1 == o2);
  CHECK(o1.size() == o3.size());
}

TEST_CASE("document augmentation copies minority classes and keeps lengths") {
  TinyTask task = make_task(30, 10, 71);
  const auto model = ulma::init_parameters<real>(task.cfg, task.head, 13);
  ulma::SynthSpec spec;
  spec.num_hate = 6;
  spec.num_offensive = 8;
  spec.num_clean = 20;
  spec.seed = 23;
  const auto raw = ulma::generate_synthetic(spec);

  ulma::AugmentOptions opts;
  opts.repetitions = 4;
  opts.copies = 2;
  opts.max_len = 32;
  opts.seed = 15;
  const auto out = ulma::augment(model, task.vocab, raw, opts);
  CHECK(out.size() == 2u * (6 + 8));
  for (const auto& d : out) {
    REQUIRE(d.label.has_value());
    CHECK((d.label == Label::kHate || d.label == Label::kOffensive));
  }

  const auto again = ulma::augment(model, task.vocab, raw, opts);
  for (size_t i = 0; i < out.size(); ++i) {
    CHECK(out[i].text == again[i].text);
    CHECK(out[i].label == again[i].label);
  }

  // Word counts survive the rewrite: replacements respect word boundaries.
  size_t at = 0;
  for (const auto& d : raw) {
    if (!d.label || (*d.label != Label::kHate && *d.label != Label::kOffensive)) continue;
    const auto clean = ulma::clean_document(d);
    const auto ids = ulma::encode(task.vocab, clean.tokens, 32);
    const size_t words = ulma::decode(task.vocab, ids).size();
    for (int c = 0; c < 2; ++c, ++at) {
      size_t out_words = out[at].text.empty() ? 0 : 1;
      for (char ch : out[at].text) out_words += ch == ' ' ? 1 : 0;
      CHECK(out_words == words);
    }
  }

  ulma::AugmentOptions none = opts;
  none.copies = 0;
  CHECK(ulma::augment(model, task.vocab, raw, none).empty());
}

TEST_CASE("cross validation aggregates per-fold scores deterministically") {
  TinyTask task = make_task(60, 0, 81);
  ulma::KfoldOptions opts;
  opts.k = 3;
  opts.jobs = 1;
  opts.train = tiny_train_options(1);
  opts.train.batch_size = 8;
  const auto a = ulma::run_kfold(nullptr, task.cfg, task.head, task.train, opts, nullptr);
  REQUIRE(a.fold_reports.size() == 3);
  opts.jobs = 3;
  const auto b = ulma::run_kfold(nullptr, task.cfg, task.head, task.train, opts, nullptr);
  REQUIRE(b.fold_reports.size() == 3);
  for (size_t f = 0; f < 3; ++f) {
    CHECK(a.fold_reports[f].macro_f1 == b.fold_reports[f].macro_f1);
    CHECK(a.fold_reports[f].accuracy == b.fold_reports[f].accuracy);
  }
  CHECK(a.mean_macro_f1 == b.mean_macro_f1);
  CHECK(a.stdev_macro_f1 == b.stdev_macro_f1);
}
