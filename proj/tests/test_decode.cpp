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

#include <cmath>
#include <map>

#include <gtest/gtest.h>

#include "relaxsd/decode.hpp"
#include "relaxsd/error.hpp"
#include "relaxsd/exact.hpp"
#include "relaxsd/schedules.hpp"

namespace relaxsd {
namespace {

ArModel one_hot_model(std::size_t vocab, std::size_t depth) {
  std::vector<std::vector<ProbRow>> levels;
  ProbRow row(vocab, 0.0);
  row[0] = 1.0;
  for (std::size_t level = 0; level < depth; ++level) levels.emplace_back(ipow(vocab, level), row);
  return ArModel::from_levels(vocab, levels);
}

ArModel two_token(ProbRow root, std::size_t depth) {
  std::vector<std::vector<ProbRow>> levels{{std::move(root)}};
  for (std::size_t level = 1; level < depth; ++level) levels.emplace_back(ipow(2, level), ProbRow{0.5, 0.5});
  return ArModel::from_levels(2, levels);
}

TEST(DraftTest, DegenerateAndDeterministic) {
  ArModel q = one_hot_model(3, 4);
  Rng rng(1);
  EXPECT_EQ(draft(q, 3, rng), (TokenSeq{0, 0, 0}));
  EXPECT_THROW(draft(q, 4, rng), DepthExceeded);

  ArModel r = random_model(4, 4, 1.0, 2);
  Rng a(77), b(77);
  for (int i = 0; i < 50; ++i) EXPECT_EQ(draft(r, 3, a), draft(r, 3, b));
}

TEST(DraftTest, EmpiricalMatchesSequenceProbabilities) {
  constexpr int kDraws = 100000;
  ArModel q = random_model(2, 3, 1.0, 17);
  Rng rng(5);
  std::vector<int> counts(4, 0);
  for (int i = 0; i < kDraws; ++i) ++counts[seq_index(draft(q, 2, rng), 2)];
  for (std::size_t idx = 0; idx < 4; ++idx) {
    const double prob = q.seq_prob(seq_from_index(idx, 2, 2));
    const double sigma = std::sqrt(kDraws * prob * (1 - prob));
    EXPECT_LE(std::abs(counts[idx] - kDraws * prob), 5 * sigma + 1e-9);
  }
}

TEST(VerifyTest, IdenticalModelsAcceptEverything) {
  ArModel p = random_model(3, 4, 1.0, 3);
  SdConfig cfg;
  cfg.L = 3;
  Rng rng(9);
  RuleTables rules = compile_rules(p, p, cfg.acceptance, cfg.resampling, cfg.L);
  for (int i = 0; i < 200; ++i) {
    RoundOutcome o = run_round(p, p, rules, rng);
    EXPECT_EQ(o.tau, 3u);
    EXPECT_TRUE(o.bonus_used);
    EXPECT_EQ(o.tokens.size(), 4u);
    EXPECT_FALSE(o.rejected_at.has_value());
  }
}

TEST(VerifyTest, ForcedRejectionResamplesOnce) {
  ArModel p = random_model(3, 3, 1.0, 4), q = random_model(3, 3, 1.0, 5);
  RuleTables rules = compile_rules(p, q, Vanilla{}, VanillaResidual{}, 2);
  for (double& x : rules.acceptance.row_at(0, 0)) x = 0.0;
  Rng rng(10);
  for (int i = 0; i < 100; ++i) {
    RoundOutcome o = run_round(p, q, rules, rng);
    EXPECT_EQ(o.tau, 0u);
    EXPECT_EQ(o.tokens.size(), 1u);
    EXPECT_EQ(o.rejected_at, std::optional<std::size_t>(1));
    EXPECT_FALSE(o.bonus_used);
  }
}

TEST(VerifyTest, ConfigOverloadChecksLength) {
  ArModel p = random_model(2, 3, 1.0, 6), q = random_model(2, 3, 1.0, 7);
  SdConfig cfg;
  cfg.L = 2;
  Rng rng(0);
  EXPECT_THROW(verify(p, q, TokenSeq{0}, cfg, rng), InvalidArgument);
  EXPECT_NO_THROW(verify(p, q, TokenSeq{0, 1}, cfg, rng));
  cfg.L = 3;
  EXPECT_THROW(verify(p, q, TokenSeq{0, 1, 1}, cfg, rng), DepthExceeded);
}

TEST(SimulateTest, MeanLengthOfTwoTokenExample) {
  ArModel p = two_token({0.6, 0.4}, 2), q = two_token({0.4, 0.6}, 2);
  SdConfig cfg;
  cfg.L = 1;
  cfg.seed = 2024;
  SimulationResult r = simulate(p, q, cfg, 100000);
  EXPECT_LE(std::abs(r.mean_accepted_len - 1.8), 3 * r.stderr_accepted_len);
}

TEST(SimulateTest, IdenticalModelsNeverReject) {
  ArModel p = random_model(3, 3, 1.0, 8);
  SdConfig cfg;
  cfg.L = 2;
  SimulationResult r = simulate(p, p, cfg, 5000);
  EXPECT_DOUBLE_EQ(r.mean_accepted_len, 3.0);
  EXPECT_DOUBLE_EQ(r.stderr_accepted_len, 0.0);
  for (double rate : r.per_position_accept_rate) EXPECT_DOUBLE_EQ(rate, 1.0);
}

TEST(SimulateTest, EmpiricalDistributionConvergesToExact) {
  constexpr std::size_t kRounds = 200000;
  ArModel p = random_model(2, 3, 1.0, 31), q = random_model(2, 3, 1.0, 32);
  SdConfig cfg;
  cfg.L = 2;
  cfg.acceptance = MultiplicativeRelax{uniform_schedule(1.8, 2)};
  cfg.resampling = OptimalGStar{};
  cfg.seed = 99;
  SimulationResult r = simulate(p, q, cfg, kRounds, SimulateOptions{4, false});
  ExactDist exact = exact_output_dist(p, q, cfg);
  ExactDist empirical{3, 2, r.empirical_dist};
  double sum = 0.0;
  for (double x : r.empirical_dist) sum += x;
  EXPECT_NEAR(sum, 1.0, 1e-12);
  EXPECT_LE(tv_exact(exact, empirical), 5 * std::sqrt(8.0 / kRounds));
}

TEST(SimulateTest, ThreadCountDoesNotChangeResults) {
  ArModel p = random_model(3, 4, 1.0, 41), q = random_model(3, 4, 1.0, 42);
  SdConfig cfg;
  cfg.L = 3;
  cfg.acceptance = MultiplicativeRelax{exp_schedule(1.5, 0.7, 3)};
  cfg.resampling = OptimalGStar{};
  cfg.seed = 7;
  SimulationResult one = simulate(p, q, cfg, 5000, SimulateOptions{1, true});
  SimulationResult many = simulate(p, q, cfg, 5000, SimulateOptions{8, true});
  EXPECT_EQ(one.mean_accepted_len, many.mean_accepted_len);
  EXPECT_EQ(one.empirical_dist, many.empirical_dist);
  EXPECT_EQ(one.per_position_accept_rate, many.per_position_accept_rate);
  ASSERT_EQ(one.rounds.size(), many.rounds.size());
  for (std::size_t i = 0; i < one.rounds.size(); ++i) EXPECT_EQ(one.rounds[i].tokens, many.rounds[i].tokens);
}

TEST(SimulateTest, SteepScheduleFavoursEarlyPositions) {
  int higher = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    ArModel p = random_model(4, 3, 1.0, 50 + seed), q = random_model(4, 3, 1.0, 60 + seed);
    SdConfig cfg;
    cfg.L = 2;
    Schedule s = uniform_schedule(1.0, 2);
    s.omegas = {8.0, 0.25};
    cfg.acceptance = MultiplicativeRelax{s};
    cfg.resampling = OptimalGStar{};
    cfg.seed = seed;
    SimulationResult r = simulate(p, q, cfg, 20000);
    higher += r.per_position_accept_rate[0] > r.per_position_accept_rate[1] ? 1 : 0;
  }
  EXPECT_EQ(higher, 10);
}

TEST(GenerateTest, EdgeCases) {
  ArModel p = one_hot_model(2, 5);
  SdConfig cfg;
  cfg.L = 2;
  EXPECT_TRUE(generate_sequence(p, p, cfg, 0).empty());
  EXPECT_EQ(generate_sequence(p, p, cfg, 5), (TokenSeq{0, 0, 0, 0, 0}));
  EXPECT_THROW(generate_sequence(p, p, cfg, 6), DepthExceeded);
}

TEST(GenerateTest, LosslessChainMatchesJoint) {
  constexpr int kRuns = 60000;
  ArModel p = random_model(2, 4, 1.0, 70), q = random_model(2, 4, 1.0, 71);
  SdConfig cfg;
  cfg.L = 2;
  Rng rng(3);
  std::vector<int> counts(16, 0);
  for (int i = 0; i < kRuns; ++i) ++counts[seq_index(generate_sequence(p, q, cfg, 4, rng), 2)];
  for (std::size_t idx = 0; idx < 16; ++idx) {
    const double prob = p.seq_prob(seq_from_index(idx, 4, 2));
    const double sigma = std::sqrt(kRuns * prob * (1 - prob));
    EXPECT_LE(std::abs(counts[idx] - kRuns * prob), 5 * sigma + 1e-9) << "sequence " << idx;
  }
}

}  // namespace
}  // namespace relaxsd
