// SPDX-License-Identifier: Apache-2.0
//
// Run-configuration serialization, validation and derived specs.

#include <filesystem>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "ulma/config.hpp"
#include "ulma/errors.hpp"

using nlohmann::json;
using ulma::RunConfig;

TEST_CASE("config json round trip preserves every field") {
  RunConfig cfg;
  cfg.encoder.num_layers = 6;
  cfg.encoder.hidden_size = 48;
  cfg.encoder.num_heads = 6;
  cfg.encoder.ffn_size = 96;
  cfg.encoder.max_positions = 80;
  cfg.encoder.dropout_rate = 0.2;
  cfg.num_classes = 4;
  cfg.tied_mlm = false;
  cfg.fusion_blocks = {2, 4, 6};
  cfg.fusion_mode = "add";
  cfg.alpha = 0.3;
  cfg.plan.encoder_lr = 2e-5;
  cfg.plan.head_lr = 2e-4;
  cfg.plan.weight_decay = 0.02;
  cfg.plan.warmup_steps = 17;
  cfg.plan.freeze_epochs = 2;
  cfg.plan.layer_decay = 0.8;
  cfg.epochs = 7;
  cfg.batch_size = 12;
  cfg.seed = 1234;
  cfg.masking.mask_ratio = 0.2;
  cfg.mlm_steps = 555;
  cfg.mlm_lr = 1e-4;
  cfg.aug_repetitions = 3;
  cfg.aug_copies = 2;
  cfg.aug_temperature = 0.5;
  cfg.k = 5;
  cfg.jobs = 4;

  const RunConfig back = ulma::config_from_json(ulma::config_to_json(cfg));
  CHECK(ulma::config_to_json(back) == ulma::config_to_json(cfg));
  CHECK(back.fusion_blocks == cfg.fusion_blocks);
  CHECK(back.seed == cfg.seed);
  CHECK(back.plan.layer_decay == cfg.plan.layer_decay);
}

TEST_CASE("config file round trip") {
  const std::filesystem::path path = std::filesystem::path("cfg_roundtrip.json");
  RunConfig cfg;
  cfg.epochs = 3;
  cfg.fusion_blocks = {1, 2};
  ulma::save_config(path.string(), cfg);
  const RunConfig back = ulma::load_config(path.string());
  CHECK(ulma::config_to_json(back) == ulma::config_to_json(cfg));
  std::filesystem::remove(path);

  CHECK_THROWS_AS(ulma::load_config("no_such_config.json"), ulma::DataError);
}

TEST_CASE("config parsing rejects unknown keys and wrong types") {
  CHECK_THROWS_AS(ulma::config_from_json(json::array()), ulma::DataError);
  CHECK_THROWS_AS(ulma::config_from_json({{"epcohs", 3}}), ulma::DataError);
  CHECK_THROWS_AS(ulma::config_from_json({{"epochs", "ten"}}), ulma::DataError);
  CHECK_THROWS_AS(ulma::config_from_json({{"fusion_blocks", 3}}), ulma::DataError);

  // Partial configs keep defaults for everything unmentioned.
  const RunConfig cfg = ulma::config_from_json({{"epochs", 3}});
  CHECK(cfg.epochs == 3);
  CHECK(cfg.encoder.num_layers == 4);
  CHECK(cfg.batch_size == 32);
}

TEST_CASE("config validation lists every violation at once") {
  RunConfig cfg;
  cfg.encoder.num_heads = 3;  // does not divide 64
  cfg.alpha = 1.5;
  cfg.epochs = 0;
  cfg.k = 1;

  const auto bad = cfg.violations();
  REQUIRE(bad.size() == 4);
  CHECK_THROWS_AS(cfg.validate(), ulma::UsageError);
  try {
    cfg.validate();
  } catch (const ulma::UsageError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("alpha") != std::string::npos);
    CHECK(msg.find("epochs") != std::string::npos);
    CHECK(msg.find("k must be") != std::string::npos);
  }

  CHECK(RunConfig{}.violations().empty());
  CHECK_NOTHROW(RunConfig{}.validate());
}

TEST_CASE("config derives fusion and smoothing specs") {
  RunConfig cfg;
  cfg.encoder.num_layers = 8;

  SUBCASE("default selects the last six blocks") {
    const auto f = cfg.fusion_spec();
    CHECK(f.block_indices == std::vector<int>{3, 4, 5, 6, 7, 8});
    CHECK(f.mode == ulma::FusionSpec::Mode::kConcatenate);
  }
  SUBCASE("shallow encoders fuse every block") {
    cfg.encoder.num_layers = 2;
    CHECK(cfg.fusion_spec().block_indices == std::vector<int>{1, 2});
  }
  SUBCASE("explicit blocks and add mode pass through") {
    cfg.fusion_blocks = {1, 8};
    cfg.fusion_mode = "add";
    const auto f = cfg.fusion_spec();
    CHECK(f.block_indices == std::vector<int>{1, 8});
    CHECK(f.mode == ulma::FusionSpec::Mode::kAdd);
    CHECK(f.fused_dim(64) == 64);
  }
  SUBCASE("smoothing spec carries alpha and class count") {
    cfg.alpha = 0.25;
    cfg.num_classes = 5;
    const auto sm = cfg.smoothing_spec();
    CHECK(sm.alpha == 0.25);
    CHECK(sm.num_classes == 5);
  }
}
