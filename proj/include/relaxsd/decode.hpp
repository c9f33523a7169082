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
#include <optional>
#include <vector>

#include "relaxsd/models.hpp"
#include "relaxsd/rng.hpp"
#include "relaxsd/rules.hpp"

namespace relaxsd {

/// One speculative-decoding setup: draft length plus the acceptance and
/// resampling families. Requires L >= 1 and L + 1 <= depth of both models.
struct SdConfig {
  std::size_t L = 1;
  AcceptanceRule acceptance = Vanilla{};
  ResamplingRule resampling = VanillaResidual{};
  std::uint64_t seed = 0;
};

/// Result of one drafting + verification round.
struct RoundOutcome {
  std::size_t tau = 0;  // accepted drafts
  TokenSeq tokens;      // tau accepted drafts followed by the correction or bonus token
  bool bonus_used = false;
  std::optional<std::size_t> rejected_at;  // 1-based position of the first rejection
};

/// Throws InvalidArgument / DepthExceeded when cfg does not fit the models.
void validate_config(const ArModel& p, const ArModel& q, const SdConfig& cfg);

/// L autoregressive draws from Q. Consumes exactly L uniforms.
TokenSeq draft(const ArModel& q, std::size_t L, Rng& rng);

/// Sequential verification of `drafts`. Consumes one uniform per tested position,
/// then one draw for either the correction token or the bonus token.
RoundOutcome verify(const ArModel& p, const ArModel& q, TokenSpan drafts, const RuleTables& rules,
                    Rng& rng);
/// Compiles the rules of `cfg` first; convenient for one-off rounds.
RoundOutcome verify(const ArModel& p, const ArModel& q, TokenSpan drafts, const SdConfig& cfg,
                    Rng& rng);

/// draft() followed by verify() on the same generator.
RoundOutcome run_round(const ArModel& p, const ArModel& q, const RuleTables& rules, Rng& rng);

struct SimulateOptions {
  unsigned threads = 1;
  bool keep_rounds = false;
};

struct SimulationResult {
  std::size_t n_rounds = 0;
  double mean_accepted_len = 0.0;
  /// Standard error of mean_accepted_len (sample standard deviation / sqrt(n)).
  double stderr_accepted_len = 0.0;
  /// Frequencies of the virtually extended length-(L+1) outputs, lexicographic index.
  std::vector<double> empirical_dist;
  /// Accepted / tested at each draft position (0 where the position was never tested).
  std::vector<double> per_position_accept_rate;
  /// Per-round outcomes, only filled when SimulateOptions::keep_rounds is set.
  std::vector<RoundOutcome> rounds;
};

/// Runs n_rounds independent rounds. Round r draws from Rng(derive_seed(seed, r)),
/// so the result is identical for every thread count.
SimulationResult simulate(const ArModel& p, const ArModel& q, const RuleTables& rules,
                          std::uint64_t seed, std::size_t n_rounds,
                          const SimulateOptions& options = {});
SimulationResult simulate(const ArModel& p, const ArModel& q, const SdConfig& cfg,
                          std::size_t n_rounds, const SimulateOptions& options = {});

/// Chains rounds until `total_len` tokens are emitted, rerooting both models on
/// the emitted prefix before every round. Rounds near the end shrink their draft
/// length so that every conditional they need exists.
TokenSeq generate_sequence(const ArModel& p, const ArModel& q, const SdConfig& cfg,
                           std::size_t total_len, Rng& rng);
TokenSeq generate_sequence(const ArModel& p, const ArModel& q, const SdConfig& cfg,
                           std::size_t total_len);

}  // namespace relaxsd
