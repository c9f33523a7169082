/*
 * Copyright 2026 The relaxsd Authors.
 * SPDX-License-Identifier: Apache-2.0
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "relaxsd/decode.hpp"
#include "relaxsd/models.hpp"

namespace relaxsd {

struct RandomModelSpec {
  std::size_t vocab_size = 3;
  std::size_t depth = 3;
  double concentration = 1.0;
  std::uint64_t seed_p = 1;
  std::uint64_t seed_q = 2;
};

struct ModelSpec {
  std::optional<RandomModelSpec> random;
  std::optional<std::pair<ArModel, ArModel>> inline_models;
};

enum class MethodKind { kVanilla, kUniform, kCoolExp, kCoolLinear, kLantern, kLanternGStar };

std::string to_string(MethodKind kind);
MethodKind method_kind_from_string(const std::string& name);

struct MethodSpec {
  MethodKind kind = MethodKind::kVanilla;
  double delta = 1.0;
  double nu = 0.7;
  int ell = 0;  // 0 selects ell = L + 1
  int k = 2;
  double lambda = 1.0;
  std::uint64_t embed_seed = 0;
  std::size_t embed_dim = 4;
};

struct SweepSpec {
  std::vector<double> deltas;
  std::vector<MethodKind> methods;
  double nu = 0.7;
  int ell = 0;  // 0 selects ell = L + 1
  std::vector<int> ks{2, 3};
  std::vector<double> lambdas{1.0, 2.0};
  std::uint64_t embed_seed = 0;
  std::size_t embed_dim = 4;
  std::size_t n_rounds = 10000;
};

struct VerifySpec {
  std::size_t seeds = 100;
  std::size_t vocab_size = 3;
  std::size_t L = 2;
  double concentration = 1.0;
  std::size_t mc_rounds = 20000;
  std::size_t mc_configs = 5;
  std::size_t lp_rows = 10;
  bool dominance_negative_case = true;
};

struct ExperimentConfig {
  ModelSpec models;
  std::size_t L = 2;
  MethodSpec method;
  std::optional<std::string> resampling;  // "vanilla" | "gstar" | "lantern"
  std::size_t n_rounds = 10000;
  std::uint64_t seed = 0;
  std::string output_path;
  std::optional<SweepSpec> sweep;
  VerifySpec verify;
};

/// Parses a JSON experiment description. Unknown keys, wrong types and
/// violated invariants raise ConfigError.
ExperimentConfig parse_config(const std::string& text);
/// Reads and parses `path`; unreadable files raise ConfigError.
ExperimentConfig load_config(const std::string& path);

std::pair<ArModel, ArModel> build_models(const ExperimentConfig& cfg);
/// Acceptance + resampling rules of `method`, with the optional override applied.
SdConfig make_sd_config(const MethodSpec& method, const std::optional<std::string>& resampling,
                        std::size_t L, std::size_t vocab_size, std::uint64_t seed);

struct SweepRow {
  std::string method;
  double delta = 0.0;
  double aux = 0.0;  // nu, ell or lambda depending on the method
  double exact_tv = 0.0;
  double tvb = 0.0;
  double expected_len = 0.0;
  double mc_mean_len = 0.0;
  double mc_stderr = 0.0;
  double wall_ms = 0.0;
};

struct RunOptions {
  unsigned threads = 1;
  std::optional<std::uint64_t> seed_override;
  std::optional<std::string> out_override;
};

/// Evaluates every (method, delta) point of the sweep, sorted by (method, delta, aux).
std::vector<SweepRow> run_sweep(const ExperimentConfig& cfg, const RunOptions& options);
void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows);

/// Shortest decimal text that round-trips to the same double.
std::string format_double(double x);

struct SuiteResult {
  std::string name;
  bool passed = false;
  double worst_margin = 0.0;  // most adverse value observed (suite specific)
  std::string detail;
};

std::vector<SuiteResult> run_verify_suites(const ExperimentConfig& cfg, const RunOptions& options);

/// CLI entry points. Return the process exit code; ConfigError escapes.
int cmd_verify(const std::string& config_path, const RunOptions& options, std::ostream& report);
int cmd_sweep(const std::string& config_path, const RunOptions& options, std::ostream& log);
int cmd_simulate(const std::string& config_path, const RunOptions& options, std::ostream& log);

}  // namespace relaxsd
