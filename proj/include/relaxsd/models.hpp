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
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "relaxsd/rng.hpp"
#include "relaxsd/seq.hpp"

namespace relaxsd {

/// Tolerance used when accepting hand-written tables.
inline constexpr double kConstructionTolerance = 1e-9;
/// Tolerance every stored row satisfies after renormalization.
inline constexpr double kRowTolerance = 1e-12;

/// Tabular autoregressive model: a complete table of next-token distributions for
/// every prefix of length 0..depth-1 over a vocabulary of `vocab_size` tokens.
/// Immutable once constructed; plays the role of both target and draft.
class ArModel {
 public:
  using TableMap = std::map<TokenSeq, ProbRow>;

  /// Validates and builds a model. Rows must be non-negative and sum to 1 within
  /// kConstructionTolerance; they are renormalized on the way in.
  /// Throws NormalizationError, IncompleteTableError or InvalidArgument.
  static ArModel from_tables(std::size_t vocab_size, std::size_t depth, const TableMap& tables);

  /// Builds from rows laid out level by level, each level in lexicographic prefix
  /// order. Same validation as from_tables.
  static ArModel from_levels(std::size_t vocab_size, std::vector<std::vector<ProbRow>> levels);

  std::size_t vocab_size() const { return vocab_; }
  std::size_t depth() const { return depth_; }

  /// Next-token distribution after `prefix`. Throws DepthExceeded if
  /// prefix.size() >= depth().
  std::span<const double> row(TokenSpan prefix) const;
  /// Same as row() but addressed by (level, lexicographic prefix index).
  std::span<const double> row_at(std::size_t level, std::size_t prefix_index) const;

  double cond_prob(TokenSpan prefix, TokenId token) const;
  /// Product of conditionals along `seq`; 1 for the empty sequence.
  double seq_prob(TokenSpan seq) const;

  /// Model whose empty prefix is `prefix` in this model (depth shrinks accordingly).
  ArModel rerooted(TokenSpan prefix) const;

  std::string to_json() const;
  static ArModel from_json(const std::string& text);

  friend bool operator==(const ArModel& a, const ArModel& b) {
    return a.vocab_ == b.vocab_ && a.depth_ == b.depth_ && a.probs_ == b.probs_;
  }

 private:
  ArModel(std::size_t vocab, std::size_t depth, std::vector<double> probs);
  std::size_t level_offset(std::size_t level) const;

  std::size_t vocab_ = 0;
  std::size_t depth_ = 0;
  // All rows, level-major, V entries per row.
  std::vector<double> probs_;
};

/// Random model with every row drawn from a symmetric Dirichlet(concentration),
/// generated by normalizing independent Gamma(concentration, 1) draws.
/// Pure function of its arguments.
ArModel random_model(std::size_t vocab_size, std::size_t depth, double concentration,
                     std::uint64_t seed);

/// TV(P(.|prefix), Q(.|prefix)). Throws VocabMismatch, DepthExceeded.
double tv_conditional(const ArModel& p, const ArModel& q, TokenSpan prefix);

struct ClosenessReport {
  bool close = false;
  TokenSeq worst_prefix;
  double worst_tv = 0.0;
};

/// Checks TV(P(.|prefix), Q(.|prefix)) <= threshold on every prefix shorter than
/// the common depth; reports the prefix with the largest TV.
ClosenessReport check_closeness(const ArModel& p, const ArModel& q, double threshold);

TokenId sample_next(const ArModel& model, TokenSpan prefix, Rng& rng);

/// Per-token vectors in R^dim; the geometry used to pick nearest neighbours.
class TokenEmbedding {
 public:
  TokenEmbedding(std::size_t dim, std::vector<std::vector<double>> vectors);

  /// Standard-normal coordinates, deterministic in `seed`.
  static TokenEmbedding random(std::size_t vocab_size, std::size_t dim, std::uint64_t seed);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return vectors_.size(); }
  std::span<const double> vector(TokenId t) const { return vectors_.at(t); }
  double distance(TokenId a, TokenId b) const;

 private:
  std::size_t dim_;
  std::vector<std::vector<double>> vectors_;
};

}  // namespace relaxsd
