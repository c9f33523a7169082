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

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "relaxsd/error.hpp"
#include "relaxsd/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Relaxed speculative decoding over tabular models"};
  app.require_subcommand(1);

  std::string config_path;
  relaxsd::RunOptions options;
  std::string out;
  std::uint64_t seed = 0;
  unsigned threads = 1;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("config_path", config_path, "Experiment JSON file")->required();
    cmd->add_option("--out", out, "Output path (overrides output_path)");
    cmd->add_option("--seed", seed, "Seed (overrides the config seed)");
    cmd->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
  };
  CLI::App* verify = app.add_subcommand("verify", "Run the invariant suites");
  CLI::App* sweep = app.add_subcommand("sweep", "Evaluate a relaxation grid and write CSV");
  CLI::App* simulate = app.add_subcommand("simulate", "Monte Carlo rounds plus summary JSON");
  for (CLI::App* cmd : {verify, sweep, simulate}) add_common(cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  options.threads = threads;
  for (CLI::App* cmd : {verify, sweep, simulate}) {
    if (!cmd->parsed()) continue;
    if (cmd->count("--out") > 0) options.out_override = out;
    if (cmd->count("--seed") > 0) options.seed_override = seed;
  }

  try {
    if (verify->parsed()) return relaxsd::cmd_verify(config_path, options, std::cout);
    if (sweep->parsed()) return relaxsd::cmd_sweep(config_path, options, std::cerr);
    return relaxsd::cmd_simulate(config_path, options, std::cerr);
  } catch (const relaxsd::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
