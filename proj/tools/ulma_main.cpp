// SPDX-License-Identifier: Apache-2.0
//
// Command-line driver for the ulma library: synthetic data generation, text
// cleaning, vocabulary training, masked-token domain tuning, mask-and-fill
// augmentation, classifier training with checkpoint/resume, prediction,
// evaluation and stratified cross-validation.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.

#include <algorithm>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "ulma/checkpoint.hpp"
#include "ulma/config.hpp"
#include "ulma/dataset.hpp"
#include "ulma/errors.hpp"
#include "ulma/kfold.hpp"
#include "ulma/metrics.hpp"
#include "ulma/pipeline.hpp"
#include "ulma/synth.hpp"
#include "ulma/text.hpp"
#include "ulma/tokenizer.hpp"

namespace {

using ulma::real;

std::vector<std::string> class_names() {
  return {ulma::label_name(ulma::Label::kClean), ulma::label_name(ulma::Label::kOffensive),
          ulma::label_name(ulma::Label::kHate)};
}

std::vector<ulma::Label> parse_class_list(const std::string& csv) {
  std::vector<ulma::Label> out;
  std::string item;
  std::istringstream in(csv);
  while (std::getline(in, item, ',')) {
    std::string upper;
    for (char c : item) upper += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    const auto label = ulma::parse_label(upper);
    if (!label) throw ulma::UsageError("class list may not contain '-'");
    out.push_back(*label);
  }
  if (out.empty()) throw ulma::UsageError("empty class list");
  return out;
}

ulma::Vocabulary load_vocab_file(const std::string& path) {
  return ulma::Vocabulary::load(path);
}

std::vector<ulma::EncodedDoc> load_encoded(const std::string& path, const ulma::Vocabulary& vocab,
                                           int max_len, ulma::TsvStats* stats = nullptr) {
  const auto raw = ulma::read_tsv(path, stats, &std::cerr);
  return ulma::encode_corpus(vocab, raw, max_len);
}

ulma::Model<real> make_fresh_model(const ulma::RunConfig& cfg, int vocab_size) {
  ulma::EncoderConfig enc = cfg.encoder;
  enc.vocab_size = vocab_size;
  ulma::HeadConfig head;
  head.num_classes = cfg.num_classes;
  head.tied_mlm = cfg.tied_mlm;
  head.fusion_dim = cfg.fusion_spec().fused_dim(enc.hidden_size);
  return ulma::init_parameters<real>(enc, head, cfg.seed);
}

ulma::Model<real> load_model_for_vocab(const std::string& path, const ulma::Vocabulary& vocab) {
  ulma::Model<real> model = ulma::load_checkpoint<real>(path, nullptr, nullptr);
  if (model.cfg.vocab_size != vocab.size()) {
    throw ulma::DataError(path + ": model vocabulary size " +
                          std::to_string(model.cfg.vocab_size) + " does not match vocabulary (" +
                          std::to_string(vocab.size()) + ")");
  }
  return model;
}

void write_text_file(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ulma::DataError("cannot open " + path + " for writing");
  out << body;
  if (!out) throw ulma::DataError("write to " + path + " failed");
}

// --config is honored before the remaining flags so that explicit flags win.
ulma::RunConfig preload_config(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--config" && i + 1 < argc) return ulma::load_config(argv[i + 1]);
    if (arg.rfind("--config=", 0) == 0) return ulma::load_config(arg.substr(9));
  }
  return ulma::RunConfig{};
}

void add_train_flags(CLI::App* cmd, ulma::RunConfig& cfg) {
  cmd->add_option("--num-layers", cfg.encoder.num_layers, "Encoder blocks")
      ->capture_default_str();
  cmd->add_option("--hidden-size", cfg.encoder.hidden_size, "Hidden width")
      ->capture_default_str();
  cmd->add_option("--num-heads", cfg.encoder.num_heads, "Attention heads")
      ->capture_default_str();
  cmd->add_option("--ffn-size", cfg.encoder.ffn_size, "Feed-forward width")
      ->capture_default_str();
  cmd->add_option("--max-positions", cfg.encoder.max_positions, "Maximum sequence length")
      ->capture_default_str();
  cmd->add_option("--dropout", cfg.encoder.dropout_rate, "Dropout rate")
      ->capture_default_str();
  cmd->add_flag("--tied-mlm,!--untied-mlm", cfg.tied_mlm,
                "Tie the masked-token projection to the token embedding");
  cmd->add_option("--fusion-blocks", cfg.fusion_blocks,
                  "1-based block outputs to fuse (default: last 6)")
      ->delimiter(',');
  cmd->add_option("--fusion-mode", cfg.fusion_mode, "concat or add")->capture_default_str();
  cmd->add_option("--num-classes", cfg.num_classes, "Output classes")->capture_default_str();
  cmd->add_option("--alpha", cfg.alpha, "Label smoothing strength")->capture_default_str();
  cmd->add_option("--encoder-lr", cfg.plan.encoder_lr, "Peak encoder learning rate")
      ->capture_default_str();
  cmd->add_option("--head-lr", cfg.plan.head_lr, "Peak head learning rate")
      ->capture_default_str();
  cmd->add_option("--weight-decay", cfg.plan.weight_decay, "Decoupled weight decay")
      ->capture_default_str();
  cmd->add_option("--beta1", cfg.plan.beta1, "Adam first-moment decay")->capture_default_str();
  cmd->add_option("--beta2", cfg.plan.beta2, "Adam second-moment decay")->capture_default_str();
  cmd->add_option("--eps", cfg.plan.eps, "Adam denominator epsilon")->capture_default_str();
  cmd->add_option("--warmup-steps", cfg.plan.warmup_steps,
                  "Warmup steps (-1: ceil of one eighth of an epoch)")
      ->capture_default_str();
  cmd->add_option("--freeze-epochs", cfg.plan.freeze_epochs,
                  "Epochs with the encoder frozen")
      ->capture_default_str();
  cmd->add_option("--layer-decay", cfg.plan.layer_decay,
                  "Per-block learning-rate ratio (1 disables)")
      ->capture_default_str();
  cmd->add_option("--epochs", cfg.epochs, "Training epochs")->capture_default_str();
  cmd->add_option("--batch-size", cfg.batch_size, "Batch size")->capture_default_str();
  cmd->add_option("--seed", cfg.seed, "Random seed")->capture_default_str();
}

int run(int argc, char** argv) {
  ulma::RunConfig cfg = preload_config(argc, argv);

  CLI::App app{"Transformer text classifier with domain-tuned masked-token pretraining"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "JSON configuration file")
      ->check(CLI::ExistingFile);

  // gen-synth
  auto* gen = app.add_subcommand("gen-synth", "Generate a deterministic synthetic corpus");
  std::string gen_out;
  ulma::SynthSpec synth;
  bool gen_unlabeled = false;
  gen->add_option("--out", gen_out, "Output TSV")->required();
  gen->add_option("--hate", synth.num_hate, "HATE documents")->capture_default_str();
  gen->add_option("--offensive", synth.num_offensive, "OFFENSIVE documents")
      ->capture_default_str();
  gen->add_option("--clean", synth.num_clean, "CLEAN documents")->capture_default_str();
  gen->add_option("--seed", synth.seed, "Random seed")->capture_default_str();
  gen->add_flag("--unlabeled", gen_unlabeled, "Write '-' instead of the labels");
  gen->callback([&] {
    auto docs = ulma::generate_synthetic(synth);
    if (gen_unlabeled) {
      for (auto& d : docs) d.label.reset();
    }
    ulma::write_tsv(gen_out, docs);
    std::cout << "wrote " << docs.size() << " documents to " << gen_out << '\n';
  });

  // preprocess
  auto* pre = app.add_subcommand("preprocess", "Normalize, mask PII and tokenize a TSV corpus");
  std::string pre_in, pre_out;
  pre->add_option("--in", pre_in, "Input TSV")->required()->check(CLI::ExistingFile);
  pre->add_option("--out", pre_out, "Output TSV of cleaned space-joined tokens")->required();
  pre->callback([&] {
    ulma::TsvStats stats;
    const auto raw = ulma::read_tsv(pre_in, &stats, &std::cerr);
    std::vector<ulma::RawDocument> cleaned;
    cleaned.reserve(raw.size());
    for (const auto& doc : raw) {
      const ulma::CleanDocument c = ulma::clean_document(doc);
      std::string text;
      for (const auto& tok : c.tokens) {
        if (!text.empty()) text += ' ';
        text += tok;
      }
      cleaned.push_back({text, c.label});
    }
    ulma::write_tsv(pre_out, cleaned);
    std::cout << "cleaned " << cleaned.size() << " documents (skipped " << stats.malformed
              << " malformed lines) into " << pre_out << '\n';
    if (stats.malformed * 100 > stats.lines) {
      throw ulma::DataError(pre_in + ": " + std::to_string(stats.malformed) + " of " +
                            std::to_string(stats.lines) +
                            " lines are malformed (over 1%); the cleaned output above holds "
                            "only the parsable lines");
    }
  });

  // build-vocab
  auto* bv = app.add_subcommand("build-vocab", "Train a subword vocabulary on a TSV corpus");
  std::string bv_in, bv_out;
  int bv_size = 2000;
  bv->add_option("--in", bv_in, "Input TSV")->required()->check(CLI::ExistingFile);
  bv->add_option("--out", bv_out, "Output vocabulary JSON")->required();
  bv->add_option("--size", bv_size, "Target vocabulary size")->capture_default_str();
  bv->callback([&] {
    const auto raw = ulma::read_tsv(bv_in, nullptr, &std::cerr);
    std::vector<std::vector<std::string>> corpus;
    corpus.reserve(raw.size());
    for (const auto& doc : raw) corpus.push_back(ulma::clean_document(doc).tokens);
    const ulma::Vocabulary vocab = ulma::build_vocab(corpus, bv_size);
    vocab.save(bv_out);
    std::cout << "vocabulary of " << vocab.size() << " tokens (" << vocab.merges().size()
              << " merges) written to " << bv_out << '\n';
  });

  // pretrain-mlm and tune-mlm share everything except the starting weights:
  // pretraining always begins from a fresh initialization, tuning may continue
  // from an earlier checkpoint. At most one subcommand runs per invocation, so
  // the option targets can be shared.
  std::string mlm_in, mlm_vocab, mlm_out, mlm_init;
  ulma::MlmTuneOptions mlm_opts;
  auto run_mlm_stage = [&](const char* stage) {
    cfg.validate();
    const auto vocab = load_vocab_file(mlm_vocab);
    const auto docs = load_encoded(mlm_in, vocab, cfg.encoder.max_positions);
    ulma::Model<real> model = mlm_init.empty() ? make_fresh_model(cfg, vocab.size())
                                               : load_model_for_vocab(mlm_init, vocab);
    mlm_opts.steps = cfg.mlm_steps;
    mlm_opts.lr = cfg.mlm_lr;
    mlm_opts.batch_size = cfg.batch_size;
    mlm_opts.masking = cfg.masking;
    mlm_opts.seed = cfg.seed;
    const double loss = ulma::tune_mlm(model, docs, mlm_opts, &std::cerr);
    ulma::save_checkpoint<real>(mlm_out, model, nullptr,
                                nlohmann::json{{"stage", stage}, {"steps", mlm_opts.steps}});
    std::cout << "masked-token training done: mean recent loss " << loss << ", checkpoint "
              << mlm_out << '\n';
  };
  auto* pt = app.add_subcommand("pretrain-mlm",
                                "Train the masked-token objective from a fresh initialization");
  auto* mlm = app.add_subcommand("tune-mlm",
                                 "Continue masked-token training on domain text");
  for (CLI::App* cmd : {pt, mlm}) {
    cmd->add_option("--in", mlm_in, "Training TSV (labels ignored)")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--vocab", mlm_vocab, "Vocabulary JSON")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--out", mlm_out, "Output checkpoint")->required();
    add_train_flags(cmd, cfg);
    cmd->add_option("--steps", cfg.mlm_steps, "Optimizer steps")->capture_default_str();
    cmd->add_option("--mlm-lr", cfg.mlm_lr, "Uniform learning rate")->capture_default_str();
    cmd->add_option("--mask-ratio", cfg.masking.mask_ratio, "Masked fraction")
        ->capture_default_str();
    cmd->add_option("--mask-prob", cfg.masking.mask_prob,
                    "Share of selected positions replaced by the mask token")
        ->capture_default_str();
    cmd->add_option("--random-prob", cfg.masking.random_prob,
                    "Share of selected positions replaced by a random token")
        ->capture_default_str();
    cmd->add_option("--keep-prob", cfg.masking.keep_prob,
                    "Share of selected positions left unchanged")
        ->capture_default_str();
  }
  mlm->add_option("--init", mlm_init, "Starting checkpoint (default: fresh init)")
      ->check(CLI::ExistingFile);
  pt->callback([&] { run_mlm_stage("pretrain"); });
  mlm->callback([&] { run_mlm_stage("mlm"); });

  // augment
  auto* aug = app.add_subcommand("augment", "Mask-and-fill augmentation of minority classes");
  std::string aug_in, aug_vocab, aug_model, aug_out, aug_classes = "hate,offensive";
  aug->add_option("--in", aug_in, "Input TSV")->required()->check(CLI::ExistingFile);
  aug->add_option("--vocab", aug_vocab, "Vocabulary JSON")->required()->check(CLI::ExistingFile);
  aug->add_option("--model", aug_model, "Checkpoint used to fill masks")
      ->required()
      ->check(CLI::ExistingFile);
  aug->add_option("--out", aug_out, "Output TSV (originals plus variants)")->required();
  aug->add_option("--repetitions", cfg.aug_repetitions, "Mask-and-fill rounds per copy")
      ->capture_default_str();
  aug->add_option("--copies", cfg.aug_copies, "Variants per selected document")
      ->capture_default_str();
  aug->add_option("--temperature", cfg.aug_temperature, "Sampling temperature (0: argmax)")
      ->capture_default_str();
  aug->add_option("--classes", aug_classes, "Comma-separated classes to augment")
      ->capture_default_str();
  aug->add_option("--seed", cfg.seed, "Random seed")->capture_default_str();
  aug->callback([&] {
    const auto vocab = load_vocab_file(aug_vocab);
    const auto model = load_model_for_vocab(aug_model, vocab);
    const auto raw = ulma::read_tsv(aug_in, nullptr, &std::cerr);
    ulma::AugmentOptions opts;
    opts.repetitions = cfg.aug_repetitions;
    opts.copies = cfg.aug_copies;
    opts.temperature = cfg.aug_temperature;
    opts.classes = parse_class_list(aug_classes);
    opts.max_len = model.cfg.max_positions;
    opts.seed = cfg.seed;
    const auto extra = ulma::augment(model, vocab, raw, opts);
    std::vector<ulma::RawDocument> merged = raw;
    merged.insert(merged.end(), extra.begin(), extra.end());
    ulma::write_tsv(aug_out, merged);
    std::cout << "wrote " << merged.size() << " documents (" << extra.size()
              << " augmented) to " << aug_out << '\n';
  });

  // train
  auto* tr = app.add_subcommand("train", "Fine-tune a classifier with validation tracking");
  std::string tr_train, tr_val, tr_vocab, tr_out, tr_init, tr_resume;
  tr->add_option("--train", tr_train, "Training TSV")->required()->check(CLI::ExistingFile);
  tr->add_option("--val", tr_val, "Validation TSV")->required()->check(CLI::ExistingFile);
  tr->add_option("--vocab", tr_vocab, "Vocabulary JSON")->required()->check(CLI::ExistingFile);
  tr->add_option("--out", tr_out, "Checkpoint path (best model at <out>.best)")->required();
  tr->add_option("--init", tr_init, "Starting checkpoint (e.g. after tune-mlm)")
      ->check(CLI::ExistingFile);
  tr->add_option("--resume", tr_resume, "Resume a half-finished run from its checkpoint")
      ->check(CLI::ExistingFile);
  add_train_flags(tr, cfg);
  tr->callback([&] {
    cfg.validate();
    if (!tr_init.empty() && !tr_resume.empty()) {
      throw ulma::UsageError("--init and --resume are mutually exclusive");
    }
    const auto vocab = load_vocab_file(tr_vocab);
    const auto train_docs = load_encoded(tr_train, vocab, cfg.encoder.max_positions);
    const auto val_docs = load_encoded(tr_val, vocab, cfg.encoder.max_positions);
    ulma::Model<real> model = tr_init.empty() ? make_fresh_model(cfg, vocab.size())
                                              : load_model_for_vocab(tr_init, vocab);
    ulma::TrainOptions opts;
    opts.plan = cfg.plan;
    opts.fusion = cfg.fusion_spec();
    opts.smoothing = cfg.smoothing_spec();
    opts.epochs = cfg.epochs;
    opts.batch_size = cfg.batch_size;
    opts.seed = cfg.seed;
    const auto result =
        ulma::train_classifier(model, train_docs, val_docs, opts, &std::cerr, tr_out, tr_resume);
    std::cout << "best_val_macro_f1 " << result.best_val_macro_f1 << " at epoch "
              << result.best_epoch << "; last checkpoint " << tr_out << '\n';
  });

  // predict
  auto* pd = app.add_subcommand("predict", "Label documents with a trained model");
  std::string pd_in, pd_vocab, pd_model, pd_out;
  pd->add_option("--in", pd_in, "Input TSV (labels ignored)")
      ->required()
      ->check(CLI::ExistingFile);
  pd->add_option("--vocab", pd_vocab, "Vocabulary JSON")->required()->check(CLI::ExistingFile);
  pd->add_option("--model", pd_model, "Checkpoint")->required()->check(CLI::ExistingFile);
  pd->add_option("--out", pd_out, "Output TSV with predicted labels")->required();
  pd->add_option("--fusion-blocks", cfg.fusion_blocks, "Must match the trained head")
      ->delimiter(',');
  pd->add_option("--fusion-mode", cfg.fusion_mode, "concat or add")->capture_default_str();
  pd->add_option("--batch-size", cfg.batch_size, "Batch size")->capture_default_str();
  pd->callback([&] {
    const auto vocab = load_vocab_file(pd_vocab);
    const auto model = load_model_for_vocab(pd_model, vocab);
    const auto raw = ulma::read_tsv(pd_in, nullptr, &std::cerr);
    const auto docs = ulma::encode_corpus(vocab, raw, model.cfg.max_positions);
    ulma::RunConfig fusion_cfg = cfg;
    fusion_cfg.encoder.num_layers = model.cfg.num_layers;
    const auto preds =
        ulma::predict(model, docs, fusion_cfg.fusion_spec(), cfg.batch_size);
    std::vector<ulma::RawDocument> out = raw;
    for (size_t i = 0; i < out.size(); ++i) {
      out[i].label = static_cast<ulma::Label>(preds[i]);
    }
    ulma::write_tsv(pd_out, out);
    std::cout << "labeled " << out.size() << " documents into " << pd_out << '\n';
  });

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Score a model against gold labels");
  std::string ev_in, ev_vocab, ev_model, ev_report, ev_csv;
  ev->add_option("--in", ev_in, "Labeled TSV")->required()->check(CLI::ExistingFile);
  ev->add_option("--vocab", ev_vocab, "Vocabulary JSON")->required()->check(CLI::ExistingFile);
  ev->add_option("--model", ev_model, "Checkpoint")->required()->check(CLI::ExistingFile);
  ev->add_option("--report", ev_report, "Write the JSON report here instead of stdout");
  ev->add_option("--csv", ev_csv, "Also write per-class rows as CSV");
  ev->add_option("--fusion-blocks", cfg.fusion_blocks, "Must match the trained head")
      ->delimiter(',');
  ev->add_option("--fusion-mode", cfg.fusion_mode, "concat or add")->capture_default_str();
  ev->add_option("--batch-size", cfg.batch_size, "Batch size")->capture_default_str();
  ev->callback([&] {
    const auto vocab = load_vocab_file(ev_vocab);
    const auto model = load_model_for_vocab(ev_model, vocab);
    const auto raw = ulma::read_tsv(ev_in, nullptr, &std::cerr);
    const auto docs = ulma::encode_corpus(vocab, raw, model.cfg.max_positions);
    std::vector<int> truth;
    for (const auto& d : docs) {
      if (!d.label) throw ulma::DataError(ev_in + ": evaluation needs labels on every line");
      truth.push_back(static_cast<int>(*d.label));
    }
    ulma::RunConfig fusion_cfg = cfg;
    fusion_cfg.encoder.num_layers = model.cfg.num_layers;
    const auto preds = ulma::predict(model, docs, fusion_cfg.fusion_spec(), cfg.batch_size);
    const auto report = ulma::evaluate(truth, preds, model.head.num_classes);
    const std::string body = ulma::report_json(report, class_names()).dump(2) + "\n";
    if (ev_report.empty()) {
      std::cout << body;
    } else {
      write_text_file(ev_report, body);
      std::cout << "macro_f1 " << report.macro_f1 << "; report written to " << ev_report << '\n';
    }
    if (!ev_csv.empty()) {
      write_text_file(ev_csv,
                      ulma::report_csv_header() + ulma::report_csv_rows(report, class_names(), -1));
    }
  });

  // kfold
  auto* kf = app.add_subcommand("kfold", "Stratified k-fold cross-validation");
  std::string kf_in, kf_vocab, kf_init, kf_report, kf_csv;
  kf->add_option("--in", kf_in, "Labeled TSV")->required()->check(CLI::ExistingFile);
  kf->add_option("--vocab", kf_vocab, "Vocabulary JSON")->required()->check(CLI::ExistingFile);
  kf->add_option("--init", kf_init, "Starting checkpoint for every fold")
      ->check(CLI::ExistingFile);
  kf->add_option("--report", kf_report, "Write the JSON report here instead of stdout");
  kf->add_option("--csv", kf_csv, "Write per-fold per-class rows as CSV");
  kf->add_option("--k", cfg.k, "Folds")->capture_default_str();
  kf->add_option("--jobs", cfg.jobs, "Folds trained in parallel")->capture_default_str();
  add_train_flags(kf, cfg);
  kf->callback([&] {
    cfg.validate();
    const auto vocab = load_vocab_file(kf_vocab);
    const auto docs = load_encoded(kf_in, vocab, cfg.encoder.max_positions);
    ulma::Model<real> base;
    const ulma::Model<real>* base_ptr = nullptr;
    if (!kf_init.empty()) {
      base = load_model_for_vocab(kf_init, vocab);
      base_ptr = &base;
    }
    ulma::EncoderConfig enc = cfg.encoder;
    enc.vocab_size = vocab.size();
    ulma::HeadConfig head;
    head.num_classes = cfg.num_classes;
    head.tied_mlm = cfg.tied_mlm;
    head.fusion_dim = cfg.fusion_spec().fused_dim(enc.hidden_size);
    ulma::KfoldOptions opts;
    opts.k = cfg.k;
    opts.jobs = cfg.jobs;
    opts.train.plan = cfg.plan;
    opts.train.fusion = cfg.fusion_spec();
    opts.train.smoothing = cfg.smoothing_spec();
    opts.train.epochs = cfg.epochs;
    opts.train.batch_size = cfg.batch_size;
    opts.train.seed = cfg.seed;
    const auto result = ulma::run_kfold(base_ptr, enc, head, docs, opts, &std::cerr);

    nlohmann::json folds = nlohmann::json::array();
    std::string csv = ulma::report_csv_header();
    for (size_t f = 0; f < result.fold_reports.size(); ++f) {
      folds.push_back(ulma::report_json(result.fold_reports[f], class_names()));
      csv += ulma::report_csv_rows(result.fold_reports[f], class_names(), static_cast<int>(f));
    }
    const nlohmann::json summary = {{"k", cfg.k},
                                    {"mean_macro_f1", result.mean_macro_f1},
                                    {"stdev_macro_f1", result.stdev_macro_f1},
                                    {"folds", folds}};
    const std::string body = summary.dump(2) + "\n";
    if (kf_report.empty()) {
      std::cout << body;
    } else {
      write_text_file(kf_report, body);
      std::cout << "mean_macro_f1 " << result.mean_macro_f1 << " stdev "
                << result.stdev_macro_f1 << "; report written to " << kf_report << '\n';
    }
    if (!kf_csv.empty()) write_text_file(kf_csv, csv);
  });

  // schedule-dump
  auto* sd = app.add_subcommand("schedule-dump", "Print the learning-rate multiplier per step");
  long long sd_total = 100, sd_warmup = -1, sd_spe = 0;
  sd->add_option("--total", sd_total, "Total steps")->capture_default_str();
  sd->add_option("--warmup", sd_warmup, "Warmup steps (-1: derive from --steps-per-epoch)")
      ->capture_default_str();
  sd->add_option("--steps-per-epoch", sd_spe, "Used when --warmup is -1")
      ->capture_default_str();
  sd->callback([&] {
    long long warmup = sd_warmup;
    if (warmup < 0) {
      if (sd_spe < 1) {
        throw ulma::UsageError("schedule-dump: give --warmup or --steps-per-epoch");
      }
      warmup = ulma::default_warmup(sd_spe);
    }
    std::cout << "step,factor\n";
    for (long long s = 0; s <= sd_total; ++s) {
      std::cout << s << ',' << ulma::schedule_lr(s, warmup, sd_total) << '\n';
    }
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ulma::UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const ulma::DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 3;
  }
}
