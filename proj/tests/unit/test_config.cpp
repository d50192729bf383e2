// Copyright 2026 The ddit Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include "ddit/config.hpp"
#include "ddit/errors.hpp"

using namespace ddit;
using Catch::Matchers::ContainsSubstring;

TEST_CASE("empty object yields the defaults", "[config]") {
  const RunConfig c = parse_run_config("{}");
  CHECK(c.model.num_blocks == 6);
  CHECK(c.model.hidden_dim == 64);
  CHECK(c.diversity.lambda_orth == 0.33);
  CHECK(c.diversity.adaptive_lo == 0.1);
  CHECK(c.diversity.adaptive_hi == 0.5);
  CHECK(c.diversity.subset_size(6) == 6);
  CHECK(c.diversity.subset_size(28) == 10);
  CHECK(c.train.learning_rate == 1e-4);
  CHECK(c.train.label_dropout_prob == 0.1);
  CHECK(c.sample.num_steps == 250);
  CHECK(c.sample.t_min == 1e-3);
  CHECK(!c.sample.class_id.has_value());
  // Geometry follows the dataset.
  CHECK(c.model.num_classes == 8);
  CHECK(c.model.token_count() == 1);
  CHECK(c.model.token_dim() == 2);
}

TEST_CASE("to_json round-trips", "[config]") {
  RunConfig c = parse_run_config(R"({"model": {"num_blocks": 4, "hidden_dim": 32},
                                     "sample": {"mode": "ode", "class_id": 3},
                                     "data": {"mode": "grid", "image_size": 8}})");
  CHECK(c.model.token_count() == 16);
  CHECK(c.model.token_dim() == 4);
  CHECK(c.model.num_classes == 9);
  const RunConfig back = run_config_from_json(to_json(c));
  CHECK(to_json(back) == to_json(c));
  CHECK(back.sample.class_id == std::optional<std::size_t>(3));
}

TEST_CASE("unknown keys and wrong types are rejected", "[config]") {
  CHECK_THROWS_WITH(parse_run_config(R"({"modle": {}})"), ContainsSubstring("modle"));
  CHECK_THROWS_WITH(parse_run_config(R"({"train": {"lr": 1}})"), ContainsSubstring("train.lr"));
  CHECK_THROWS_AS(parse_run_config(R"({"train": {"batch_size": "big"}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"train": {"batch_size": -4}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"train": {"diversity": 1}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"sample": {"mode": "heun"}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"data": {"kind": "moons"}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("[]"), ConfigError);
}

TEST_CASE("malformed JSON reports a byte position", "[config]") {
  CHECK_THROWS_WITH(parse_run_config("{\"model\": {\"num_blocks\": 6,}}"), ContainsSubstring("at byte 28"));
  CHECK_THROWS_AS(load_run_config("/nonexistent/run.json"), ConfigError);
}

TEST_CASE("cross-field invariants", "[config]") {
  CHECK_THROWS_AS(parse_run_config(R"({"model": {"num_blocks": 5}})"), ConfigError);
  CHECK_NOTHROW(parse_run_config(R"({"model": {"num_blocks": 5, "use_long_residual": false}})"));
  CHECK_THROWS_AS(parse_run_config(R"({"model": {"hidden_dim": 30}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"diversity": {"adaptive_lo": 0.5}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"diversity": {"lambda_mi": -0.1}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"diversity": {"layer_subset_size": 1}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"diversity": {"layer_subset_size": 7}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"train": {"label_dropout_prob": 1.0}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"train": {"alignment": true, "alignment_depth": 6}})"), ConfigError);
  CHECK_NOTHROW(parse_run_config(R"({"train": {"alignment_depth": 6}})"));
  CHECK_THROWS_AS(parse_run_config(R"({"sample": {"t_min": 0}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"sample": {"class_id": 8}})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"data": {"mode": "grid", "image_size": 7}})"), ConfigError);
}

TEST_CASE("enum spellings", "[config]") {
  CHECK(to_string(SampleMode::kOde) == "ode");
  CHECK(to_string(SampleMode::kSde) == "sde");
  CHECK(parse_sample_mode("sde") == SampleMode::kSde);
  CHECK(to_string(DataMode::kGrid) == "grid");
  CHECK(to_string(PointKind::kCheckerboard) == "checkerboard");
}
