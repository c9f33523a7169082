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

#include <span>
#include <string>
#include <vector>

#include "relaxsd/decode.hpp"
#include "relaxsd/models.hpp"
#include "relaxsd/rules.hpp"

namespace relaxsd {

/// Exact probability mass function over all V^length sequences, stored in
/// lexicographic order.
struct ExactDist {
  std::size_t length = 0;
  std::size_t vocab = 0;
  std::vector<double> probs;

  double prob(TokenSpan seq) const { return probs.at(seq_index(seq, vocab)); }
  /// Throws DomainMismatch / NormalizationError if the invariants do not hold.
  void validate(double tolerance = 1e-10) const;

  /// {"length": n, "vocab": V, "probs": {"<comma-joined seq>": p, ...}}
  std::string to_json() const;
  static ExactDist from_json(const std::string& text);
};

/// Joint distribution of the first `length` tokens under P.
ExactDist target_joint(const ArModel& p, std::size_t length);

/// P-hat over X^{L+1} by walking every draft path: each draft prefix, each
/// rejection position, each resampled token, then the target continuation.
ExactDist exact_output_dist_paths(const ArModel& p, const ArModel& q, const RuleTables& rules);
/// P-hat over X^{L+1} from the explicit per-sequence closed form (rejection mass
/// folded into R(y | prefix) = sum_t Q(t)(1 - f(t)) G(y | prefix, t)).
ExactDist exact_output_dist_closed_form(const ArModel& p, const ArModel& q,
                                        const RuleTables& rules);

/// Tolerance of the internal cross-check between the two P-hat computations.
inline constexpr double kCrossCheckTolerance = 1e-10;

/// Computes both forms, throws CrossCheckFailed if they differ by more than
/// kCrossCheckTolerance anywhere, and returns the path-enumeration result.
ExactDist exact_output_dist(const ArModel& p, const ArModel& q, const RuleTables& rules);
ExactDist exact_output_dist(const ArModel& p, const ArModel& q, const SdConfig& cfg);

/// Largest entrywise difference between the two P-hat computations.
double exact_cross_check_gap(const ArModel& p, const ArModel& q, const RuleTables& rules);

/// E[tau + 1] = 1 + sum_i sum_{x_{1:i}} Q(x_{1:i}) prod_{j<=i} f_j.
double exact_expected_accepted(const ArModel& p, const ArModel& q, const AcceptanceTable& f);
double exact_expected_accepted(const ArModel& p, const ArModel& q, const AcceptanceRule& rule,
                               std::size_t L);

/// Half L1 distance. Throws DomainMismatch on differing length or vocabulary.
double tv_exact(const ExactDist& a, const ExactDist& b);

/// Right-hand side of the TV bound for arbitrary resampling rows.
double tvb_upper_bound(const ArModel& p, const ArModel& q, const AcceptanceTable& f,
                       const ResamplingTable& g);
double tvb_upper_bound(const ArModel& p, const ArModel& q, const AcceptanceRule& acceptance,
                       const ResamplingRule& resampling, std::size_t L);

/// The bound after substituting the optimal resampling rows:
/// 1/2 sum_i sum_{x_{1:i}} W(x_{1:i}) [sum |P - Q f| - sum (1 - f) Q].
/// Throws PremiseViolated unless 1 >= f >= min{1, P/Q} everywhere.
double tvb_gstar_reduced(const ArModel& p, const ArModel& q, const AcceptanceTable& f);
double tvb_gstar_reduced(const ArModel& p, const ArModel& q, const AcceptanceRule& rule,
                         std::size_t L);

// ---------------------------------------------------------------------------
// Single-row linear program behind the optimal resampling distribution.

/// sum_x |P(x) - Q(x) f(x) - G(x) r| with r = sum_x (1 - f(x)) Q(x).
double lp_objective(std::span<const double> p, std::span<const double> q,
                    std::span<const double> f, std::span<const double> g);
/// sum_x |P - Q f| - sum_x (1 - f) Q: the claimed infimum of lp_objective.
double lp_claimed_minimum(std::span<const double> p, std::span<const double> q,
                          std::span<const double> f);

struct LpSolution {
  ProbRow best_g;
  double best_objective = 0.0;
};

/// Exhaustive search over the simplex grid with spacing `grid_step`, refined by
/// pairwise mass-transfer coordinate descent from the best grid point.
/// Throws VocabTooLarge for V > 4 and InvalidArgument unless 0 < grid_step <= 0.01.
LpSolution brute_force_optimal_resample(std::span<const double> p, std::span<const double> q,
                                        std::span<const double> f, double grid_step);

/// max_x |G*(x) - G_van(x)| at `prefix`. Throws DominanceViolated if some entry of
/// f is below its vanilla counterpart, DegenerateResidual if P = Q there.
double verify_proposition1(const ArModel& p, const ArModel& q, const AcceptanceTable& f,
                           TokenSpan prefix);
double verify_proposition1(const ArModel& p, const ArModel& q, const AcceptanceRule& rule,
                           std::size_t L, TokenSpan prefix);

// ---------------------------------------------------------------------------
// Two-position perturbation analysis.

struct PerturbationReport {
  double c1 = 0.0;
  double c2 = 0.0;
  double tvb = 0.0;
  double expected_len = 0.0;
  bool assumptions_ok = false;
  /// max of the two signed-mass differences |Q(X1+) - Q(X1-)| and
  /// max_{x1} |Q(X2- | x1) - Q(X2+ | x1)| of the unperturbed rule.
  double assumption1_margin = 0.0;
  /// Largest conditional TV(P, Q) over all prefixes.
  double assumption2_margin = 0.0;
};

struct PerturbationOptions {
  double assumption1_threshold = 0.3;
  double closeness_threshold = 0.4;
  /// Perturbed entries may exceed 1 (the formal perturbation of a rule that is
  /// already saturated at 1). Entries below 0 always raise ClampViolation.
  bool allow_formal_overshoot = true;
  double max_abs_c2 = 0.05;
};

struct PerturbationPair {
  PerturbationReport arm;     // the requested c2
  PerturbationReport mirror;  // -c2
  double base_expected_len = 0.0;
  double base_tvb = 0.0;
  /// Signed-mass balance at positions 1 and 2.
  double assumption1_first = 0.0;
  double assumption1_second = 0.0;
  bool dominates_vanilla_at_2 = false;
};

/// c1 = -E_Q[f1] * c2 / (1 + E_Q[f2] + c2), the first-position shift keeping
/// E[tau + 1] unchanged under f1 + c1, f2 + c2.
double compensating_c1(const ArModel& p, const ArModel& q, const AcceptanceTable& f, double c2);

/// Perturbs a length-2 rule additively by (c1, c2) and by (c1', -c2), with the
/// first-position shift chosen to keep E[tau + 1] fixed, and reports the TV
/// bound of both arms under the recomputed optimal resampling rows.
PerturbationPair perturbation_experiment(const ArModel& p, const ArModel& q,
                                         const AcceptanceTable& base, double c2,
                                         const PerturbationOptions& options = {});
PerturbationPair perturbation_experiment(const ArModel& p, const ArModel& q,
                                         const Schedule& base_omegas, double c2,
                                         const PerturbationOptions& options = {});

struct Proposition5Check {
  double expected_f2 = 0.0;  // E_{(X1,X2)~Q}[f2]
  double delta = 0.0;        // Delta(f2, P, Q)
  double margin = 0.0;       // expected_f2 - delta - 1/5
};

/// Evaluates both sides of E_Q[f2] >= Delta(f2, P, Q) + 1/5.
Proposition5Check proposition5_check(const ArModel& p, const ArModel& q, const AcceptanceTable& f);

/// True iff f >= min{1, P/Q} on every entry of draft position `position`.
bool dominates_vanilla(const ArModel& p, const ArModel& q, const AcceptanceTable& f,
                       std::size_t position);

}  // namespace relaxsd
