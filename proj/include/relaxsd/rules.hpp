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

#include <memory>
#include <span>
#include <variant>
#include <vector>

#include "relaxsd/models.hpp"
#include "relaxsd/schedules.hpp"
#include "relaxsd/seq.hpp"

namespace relaxsd {

/// Parameters of the LANTERN++ neighbourhood aggregation.
struct LanternParams {
  int k = 1;
  double lambda = 0.0;
  std::shared_ptr<const TokenEmbedding> embeddings;
};

// Acceptance families f_i.
struct Vanilla {};
struct MultiplicativeRelax {
  Schedule schedule;
};
struct LanternPP {
  LanternParams params;
};
using AcceptanceRule = std::variant<Vanilla, MultiplicativeRelax, LanternPP>;

// Resampling families G_i.
struct VanillaResidual {};
struct OptimalGStar {};
struct LanternResidual {
  LanternParams params;
};
using ResamplingRule = std::variant<VanillaResidual, OptimalGStar, LanternResidual>;

// ---------------------------------------------------------------------------
// Row-level primitives. These work on raw next-token rows and are shared by the
// per-prefix operations, the decoder and the exact engine.

/// Entrywise [P - Q*f]_+, evaluated as Q * max(0, P/Q - f) so that f = P/Q
/// cancels exactly. Where Q = 0 the entry is P.
ProbRow positive_residual(std::span<const double> p, std::span<const double> q,
                          std::span<const double> f);

/// Normalizes in place; returns false (and leaves the row untouched) if the row
/// has zero mass.
bool normalize_in_place(ProbRow& row);

/// Norm([P - Q*f]_+), or the P row itself when that residual is identically 0.
ProbRow gstar_row(std::span<const double> p, std::span<const double> q,
                  std::span<const double> f);

/// Acceptance probabilities min{1, omega * P(x)/Q(x)} for every x (0/0 = 1).
ProbRow relaxed_accept_row(std::span<const double> p, std::span<const double> q, double omega);

/// A^{k,lambda}(anchor): the anchor plus the subset of its k nearest neighbours
/// (Euclidean, ties to the lower id) admitted greedily nearest-first while the
/// admitted non-anchor mass stays strictly below lambda * P(anchor).
/// The result is sorted by token id.
std::vector<TokenId> knn_aggregate_set(const TokenEmbedding& embeddings,
                                       std::span<const double> p_row, TokenId anchor, int k,
                                       double lambda);

/// P^{k,lambda}: the mass of `aggregate` moved onto the anchor.
ProbRow lantern_target_row(std::span<const double> p_row, std::span<const TokenId> aggregate,
                           TokenId anchor);

// ---------------------------------------------------------------------------
// Per-prefix operations.

double accept_prob_vanilla(const ArModel& p, const ArModel& q, TokenSpan prefix, TokenId token);
double accept_prob_relaxed(const ArModel& p, const ArModel& q, TokenSpan prefix, TokenId token,
                           double omega);

ProbRow modified_target_lantern(const ArModel& p, TokenSpan prefix, TokenId anchor,
                                const LanternParams& params);
double accept_prob_lantern(const ArModel& p, const ArModel& q, TokenSpan prefix, TokenId token,
                           const LanternParams& params);

/// Norm([P - Q]_+). Throws DegenerateResidual when P = Q on this prefix.
ProbRow resample_dist_vanilla(const ArModel& p, const ArModel& q, TokenSpan prefix);
/// Norm([P - Q*f]_+) with the P-row fallback.
ProbRow resample_dist_gstar(const ArModel& p, const ArModel& q, TokenSpan prefix,
                            std::span<const double> f_row);
/// Norm([P^{k,lambda} - Q]_+) where P^{k,lambda} is anchored at the rejected
/// draft token; falls back to P^{k,lambda} when the residual vanishes.
ProbRow resample_dist_lantern(const ArModel& p, const ArModel& q, TokenSpan prefix,
                              TokenId rejected, const LanternParams& params);

/// f_{|prefix|+1}(prefix, x) for every candidate x.
ProbRow acceptance_row(const AcceptanceRule& rule, const ArModel& p, const ArModel& q,
                       TokenSpan prefix);

/// Checks parameter invariants of a rule against a vocabulary and draft length.
void validate_rule(const AcceptanceRule& rule, std::size_t vocab_size, std::size_t length);
void validate_rule(const ResamplingRule& rule, std::size_t vocab_size);

bool resampling_depends_on_rejected(const ResamplingRule& rule);

// ---------------------------------------------------------------------------
// Compiled tables: the rules evaluated at every draft prefix of a round.

/// f_{i+1}(x_{1:i}, .) for i = 0..length-1 and every prefix x_{1:i}.
class AcceptanceTable {
 public:
  AcceptanceTable(std::size_t vocab_size, std::size_t length, double fill = 0.0);

  static AcceptanceTable compile(const ArModel& p, const ArModel& q, const AcceptanceRule& rule,
                                 std::size_t length);

  std::size_t vocab_size() const { return vocab_; }
  std::size_t length() const { return length_; }

  std::span<const double> row(TokenSpan prefix) const;
  std::span<double> row(TokenSpan prefix);
  std::span<const double> row_at(std::size_t level, std::size_t prefix_index) const;
  std::span<double> row_at(std::size_t level, std::size_t prefix_index);

  /// Adds `c` to every entry of draft position `position` (1-based).
  void shift_position(std::size_t position, double c);

  double min_value() const;
  double max_value() const;

 private:
  std::size_t offset(std::size_t level, std::size_t prefix_index) const;

  std::size_t vocab_;
  std::size_t length_;
  std::vector<double> values_;
};

/// G_{i+1}(. | x_{1:i}, rejected draft) for i = 0..length-1. For rules that do
/// not look at the rejected token every rejected slot holds the same row.
class ResamplingTable {
 public:
  ResamplingTable(std::size_t vocab_size, std::size_t length, bool depends_on_rejected);

  /// Evaluates `rule` under the acceptance table `f`. Rows whose rejection mass
  /// is zero are never sampled; a degenerate vanilla residual is tolerated there
  /// and replaced by the P row.
  static ResamplingTable compile(const ArModel& p, const ArModel& q, const ResamplingRule& rule,
                                 const AcceptanceTable& f);

  std::size_t vocab_size() const { return vocab_; }
  std::size_t length() const { return length_; }
  bool depends_on_rejected() const { return depends_on_rejected_; }

  std::span<const double> row(TokenSpan prefix, TokenId rejected) const;
  std::span<const double> row_at(std::size_t level, std::size_t prefix_index,
                                 TokenId rejected) const;
  std::span<double> row_at(std::size_t level, std::size_t prefix_index, TokenId rejected);

 private:
  std::size_t offset(std::size_t level, std::size_t prefix_index, TokenId rejected) const;

  std::size_t vocab_;
  std::size_t length_;
  bool depends_on_rejected_;
  std::vector<double> values_;
};

struct RuleTables {
  AcceptanceTable acceptance;
  ResamplingTable resampling;
};

RuleTables compile_rules(const ArModel& p, const ArModel& q, const AcceptanceRule& acceptance,
                         const ResamplingRule& resampling, std::size_t length);

}  // namespace relaxsd
