// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "ulma/encoder.hpp"
#include "ulma/objectives.hpp"
#include "ulma/optim.hpp"
#include "ulma/pipeline.hpp"

namespace ulma {

// Everything an experiment run can tune, loadable from a JSON file and
// overridable by command-line flags. vocab_size is filled in from the
// vocabulary file at run time.
struct RunConfig {
  EncoderConfig encoder;

  int num_classes = 3;
  bool tied_mlm = true;
  std::vector<int> fusion_blocks;  // empty selects the last min(6, L) blocks
  std::string fusion_mode = "concat";

  double alpha = 0.2;
  TrainPlan plan;
  int epochs = 10;
  int batch_size = 32;
  uint64_t seed = 42;

  MaskingSpec masking;
  long long mlm_steps = 10000;
  double mlm_lr = 3e-5;

  int aug_repetitions = 5;
  int aug_copies = 1;
  double aug_temperature = 0.0;

  int k = 10;
  int jobs = 1;

  FusionSpec fusion_spec() const;
  SmoothingSpec smoothing_spec() const;

  // Returns one message per violated constraint; empty means valid.
  std::vector<std::string> violations() const;
  void validate() const;  // throws UsageError listing every violation
};

RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const RunConfig& cfg);
RunConfig load_config(const std::string& path);
void save_config(const std::string& path, const RunConfig& cfg);

}  // namespace ulma
