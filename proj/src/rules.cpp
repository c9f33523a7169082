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

#include "relaxsd/rules.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "relaxsd/error.hpp"
#include "relaxsd/numeric.hpp"

namespace relaxsd {

namespace {

// Rejection mass below this is treated as unreachable when a vanilla residual
// degenerates (P and Q equal up to rounding).
constexpr double kUnreachableMass = 1e-12;

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void check_pair(const ArModel& p, const ArModel& q) {
  if (p.vocab_size() != q.vocab_size()) {
    throw VocabMismatch("target and draft vocabularies differ (" + std::to_string(p.vocab_size()) +
                        " vs " + std::to_string(q.vocab_size()) + ")");
  }
}

void check_lantern(const LanternParams& params, std::size_t vocab_size) {
  if (params.k < 1 || static_cast<std::size_t>(params.k) >= vocab_size) {
    throw InvalidArgument("LANTERN++ needs 1 <= k < vocab_size");
  }
  if (!(params.lambda >= 0.0) || !std::isfinite(params.lambda)) {
    throw InvalidArgument("LANTERN++ needs lambda >= 0");
  }
  if (!params.embeddings || params.embeddings->size() != vocab_size) {
    throw InvalidArgument("LANTERN++ needs one embedding per vocabulary token");
  }
}

}  // namespace

ProbRow positive_residual(std::span<const double> p, std::span<const double> q,
                          std::span<const double> f) {
  ProbRow out(p.size());
  for (std::size_t x = 0; x < p.size(); ++x) {
    if (q[x] == 0.0) {
      out[x] = p[x];
    } else {
      out[x] = q[x] * std::max(0.0, p[x] / q[x] - f[x]);
    }
  }
  return out;
}

bool normalize_in_place(ProbRow& row) {
  const double total = compensated_sum(row);
  if (!(total > 0.0)) return false;
  for (double& x : row) x /= total;
  return true;
}

ProbRow gstar_row(std::span<const double> p, std::span<const double> q,
                  std::span<const double> f) {
  ProbRow g = positive_residual(p, q, f);
  if (!normalize_in_place(g)) g.assign(p.begin(), p.end());
  return g;
}

ProbRow relaxed_accept_row(std::span<const double> p, std::span<const double> q, double omega) {
  ProbRow f(p.size());
  for (std::size_t x = 0; x < p.size(); ++x) f[x] = std::min(1.0, omega * safe_ratio(p[x], q[x]));
  return f;
}

std::vector<TokenId> knn_aggregate_set(const TokenEmbedding& embeddings,
                                       std::span<const double> p_row, TokenId anchor, int k,
                                       double lambda) {
  const std::size_t vocab = p_row.size();
  if (anchor >= vocab) throw InvalidArgument("anchor outside vocabulary");
  if (k < 1 || static_cast<std::size_t>(k) >= vocab) {
    throw InvalidArgument("knn_aggregate_set needs 1 <= k < vocab_size");
  }
  if (embeddings.size() != vocab) throw InvalidArgument("embedding count differs from vocab size");

  std::vector<std::pair<double, TokenId>> candidates;
  candidates.reserve(vocab - 1);
  for (TokenId t = 0; t < vocab; ++t) {
    if (t != anchor) candidates.emplace_back(embeddings.distance(anchor, t), t);
  }
  std::sort(candidates.begin(), candidates.end());
  candidates.resize(static_cast<std::size_t>(k));

  const double budget = lambda * p_row[anchor];
  std::vector<TokenId> set{anchor};
  double admitted = 0.0;
  for (const auto& [dist, t] : candidates) {
    if (admitted + p_row[t] < budget) {
      admitted += p_row[t];
      set.push_back(t);
    }
  }
  std::sort(set.begin(), set.end());
  return set;
}

ProbRow lantern_target_row(std::span<const double> p_row, std::span<const TokenId> aggregate,
                           TokenId anchor) {
  ProbRow out(p_row.begin(), p_row.end());
  CompensatedSum mass;
  for (TokenId t : aggregate) {
    mass.add(p_row[t]);
    out[t] = 0.0;
  }
  out[anchor] = mass.value();
  return out;
}

double accept_prob_vanilla(const ArModel& p, const ArModel& q, TokenSpan prefix, TokenId token) {
  check_pair(p, q);
  return std::min(1.0, safe_ratio(p.cond_prob(prefix, token), q.cond_prob(prefix, token)));
}

double accept_prob_relaxed(const ArModel& p, const ArModel& q, TokenSpan prefix, TokenId token,
                           double omega) {
  if (!(omega > 0.0)) throw InvalidArgument("omega must be positive");
  check_pair(p, q);
  return std::min(1.0, omega * safe_ratio(p.cond_prob(prefix, token), q.cond_prob(prefix, token)));
}

ProbRow modified_target_lantern(const ArModel& p, TokenSpan prefix, TokenId anchor,
                                const LanternParams& params) {
  check_lantern(params, p.vocab_size());
  auto row = p.row(prefix);
  auto set = knn_aggregate_set(*params.embeddings, row, anchor, params.k, params.lambda);
  return lantern_target_row(row, set, anchor);
}

double accept_prob_lantern(const ArModel& p, const ArModel& q, TokenSpan prefix, TokenId token,
                           const LanternParams& params) {
  check_pair(p, q);
  ProbRow target = modified_target_lantern(p, prefix, token, params);
  return std::min(1.0, safe_ratio(target[token], q.cond_prob(prefix, token)));
}

ProbRow resample_dist_vanilla(const ArModel& p, const ArModel& q, TokenSpan prefix) {
  check_pair(p, q);
  auto p_row = p.row(prefix);
  const ProbRow ones(p.vocab_size(), 1.0);
  ProbRow g = positive_residual(p_row, q.row(prefix), ones);
  if (!normalize_in_place(g)) {
    throw DegenerateResidual("[P - Q]_+ vanishes at prefix (" + seq_to_key(prefix) + ")");
  }
  return g;
}

ProbRow resample_dist_gstar(const ArModel& p, const ArModel& q, TokenSpan prefix,
                            std::span<const double> f_row) {
  check_pair(p, q);
  if (f_row.size() != p.vocab_size()) throw InvalidArgument("f_row length differs from vocab size");
  for (double f : f_row) {
    if (!(f >= 0.0 && f <= 1.0)) throw InvalidArgument("f_row entries must lie in [0, 1]");
  }
  return gstar_row(p.row(prefix), q.row(prefix), f_row);
}

ProbRow resample_dist_lantern(const ArModel& p, const ArModel& q, TokenSpan prefix,
                              TokenId rejected, const LanternParams& params) {
  check_pair(p, q);
  ProbRow target = modified_target_lantern(p, prefix, rejected, params);
  const ProbRow ones(p.vocab_size(), 1.0);
  ProbRow g = positive_residual(target, q.row(prefix), ones);
  if (!normalize_in_place(g)) return target;
  return g;
}

ProbRow acceptance_row(const AcceptanceRule& rule, const ArModel& p, const ArModel& q,
                       TokenSpan prefix) {
  check_pair(p, q);
  auto p_row = p.row(prefix);
  auto q_row = q.row(prefix);
  return std::visit(
      Overloaded{
          [&](const Vanilla&) { return relaxed_accept_row(p_row, q_row, 1.0); },
          [&](const MultiplicativeRelax& r) {
            const std::size_t position = prefix.size() + 1;
            if (position > r.schedule.length()) {
              throw InvalidArgument("schedule has no omega for draft position " +
                                    std::to_string(position));
            }
            return relaxed_accept_row(p_row, q_row, r.schedule.omega(position));
          },
          [&](const LanternPP& r) {
            check_lantern(r.params, p.vocab_size());
            ProbRow f(p_row.size());
            for (TokenId t = 0; t < f.size(); ++t) {
              auto set = knn_aggregate_set(*r.params.embeddings, p_row, t, r.params.k,
                                           r.params.lambda);
              ProbRow target = lantern_target_row(p_row, set, t);
              f[t] = std::min(1.0, safe_ratio(target[t], q_row[t]));
            }
            return f;
          },
      },
      rule);
}

void validate_rule(const AcceptanceRule& rule, std::size_t vocab_size, std::size_t length) {
  std::visit(Overloaded{
                 [](const Vanilla&) {},
                 [&](const MultiplicativeRelax& r) {
                   if (r.schedule.length() != length) {
                     throw InvalidArgument("schedule length " +
                                           std::to_string(r.schedule.length()) +
                                           " differs from draft length " + std::to_string(length));
                   }
                   for (double w : r.schedule.omegas) {
                     if (!(w > 0.0)) throw InvalidArgument("omegas must be positive");
                   }
                 },
                 [&](const LanternPP& r) { check_lantern(r.params, vocab_size); },
             },
             rule);
}

void validate_rule(const ResamplingRule& rule, std::size_t vocab_size) {
  if (const auto* r = std::get_if<LanternResidual>(&rule)) check_lantern(r->params, vocab_size);
}

bool resampling_depends_on_rejected(const ResamplingRule& rule) {
  return std::holds_alternative<LanternResidual>(rule);
}

// ---------------------------------------------------------------------------

AcceptanceTable::AcceptanceTable(std::size_t vocab_size, std::size_t length, double fill)
    : vocab_(vocab_size), length_(length) {
  std::size_t rows = 0;
  for (std::size_t l = 0; l < length; ++l) rows += ipow(vocab_size, l);
  values_.assign(rows * vocab_size, fill);
}

std::size_t AcceptanceTable::offset(std::size_t level, std::size_t prefix_index) const {
  if (level >= length_) {
    throw DepthExceeded("acceptance table covers draft positions 1.." + std::to_string(length_));
  }
  std::size_t rows = 0;
  for (std::size_t l = 0; l < level; ++l) rows += ipow(vocab_, l);
  return (rows + prefix_index) * vocab_;
}

std::span<const double> AcceptanceTable::row_at(std::size_t level, std::size_t prefix_index) const {
  return std::span<const double>(values_).subspan(offset(level, prefix_index), vocab_);
}

std::span<double> AcceptanceTable::row_at(std::size_t level, std::size_t prefix_index) {
  return std::span<double>(values_).subspan(offset(level, prefix_index), vocab_);
}

std::span<const double> AcceptanceTable::row(TokenSpan prefix) const {
  return row_at(prefix.size(), seq_index(prefix, vocab_));
}

std::span<double> AcceptanceTable::row(TokenSpan prefix) {
  return row_at(prefix.size(), seq_index(prefix, vocab_));
}

void AcceptanceTable::shift_position(std::size_t position, double c) {
  const std::size_t level = position - 1;
  const std::size_t n = ipow(vocab_, level);
  for (std::size_t idx = 0; idx < n; ++idx) {
    for (double& f : row_at(level, idx)) f += c;
  }
}

double AcceptanceTable::min_value() const {
  return values_.empty() ? 0.0 : *std::min_element(values_.begin(), values_.end());
}

double AcceptanceTable::max_value() const {
  return values_.empty() ? 0.0 : *std::max_element(values_.begin(), values_.end());
}

AcceptanceTable AcceptanceTable::compile(const ArModel& p, const ArModel& q,
                                         const AcceptanceRule& rule, std::size_t length) {
  check_pair(p, q);
  validate_rule(rule, p.vocab_size(), length);
  if (length > p.depth() || length > q.depth()) {
    throw DepthExceeded("draft length " + std::to_string(length) + " exceeds model depth");
  }
  AcceptanceTable table(p.vocab_size(), length);
  for (std::size_t level = 0; level < length; ++level) {
    const std::size_t n = ipow(p.vocab_size(), level);
    for (std::size_t idx = 0; idx < n; ++idx) {
      TokenSeq prefix = seq_from_index(idx, level, p.vocab_size());
      ProbRow f = acceptance_row(rule, p, q, prefix);
      std::copy(f.begin(), f.end(), table.row_at(level, idx).begin());
    }
  }
  return table;
}

ResamplingTable::ResamplingTable(std::size_t vocab_size, std::size_t length,
                                 bool depends_on_rejected)
    : vocab_(vocab_size), length_(length), depends_on_rejected_(depends_on_rejected) {
  std::size_t rows = 0;
  for (std::size_t l = 0; l < length; ++l) rows += ipow(vocab_size, l);
  values_.assign(rows * vocab_size * vocab_size, 0.0);
}

std::size_t ResamplingTable::offset(std::size_t level, std::size_t prefix_index,
                                    TokenId rejected) const {
  if (level >= length_) {
    throw DepthExceeded("resampling table covers draft positions 1.." + std::to_string(length_));
  }
  if (rejected >= vocab_) throw InvalidArgument("rejected token outside vocabulary");
  std::size_t rows = 0;
  for (std::size_t l = 0; l < level; ++l) rows += ipow(vocab_, l);
  return ((rows + prefix_index) * vocab_ + rejected) * vocab_;
}

std::span<const double> ResamplingTable::row_at(std::size_t level, std::size_t prefix_index,
                                                TokenId rejected) const {
  return std::span<const double>(values_).subspan(offset(level, prefix_index, rejected), vocab_);
}

std::span<double> ResamplingTable::row_at(std::size_t level, std::size_t prefix_index,
                                          TokenId rejected) {
  return std::span<double>(values_).subspan(offset(level, prefix_index, rejected), vocab_);
}

std::span<const double> ResamplingTable::row(TokenSpan prefix, TokenId rejected) const {
  return row_at(prefix.size(), seq_index(prefix, vocab_), rejected);
}

ResamplingTable ResamplingTable::compile(const ArModel& p, const ArModel& q,
                                         const ResamplingRule& rule, const AcceptanceTable& f) {
  check_pair(p, q);
  validate_rule(rule, p.vocab_size());
  const std::size_t vocab = p.vocab_size();
  const std::size_t length = f.length();
  if (f.vocab_size() != vocab) throw VocabMismatch("acceptance table vocabulary differs");
  ResamplingTable table(vocab, length, resampling_depends_on_rejected(rule));
  const ProbRow ones(vocab, 1.0);

  for (std::size_t level = 0; level < length; ++level) {
    const std::size_t n = ipow(vocab, level);
    for (std::size_t idx = 0; idx < n; ++idx) {
      auto p_row = p.row_at(level, idx);
      auto q_row = q.row_at(level, idx);
      auto f_row = f.row_at(level, idx);

      auto fill_all = [&](const ProbRow& g) {
        for (TokenId t = 0; t < vocab; ++t) {
          std::copy(g.begin(), g.end(), table.row_at(level, idx, t).begin());
        }
      };

      if (std::holds_alternative<VanillaResidual>(rule)) {
        ProbRow g = positive_residual(p_row, q_row, ones);
        if (!normalize_in_place(g)) {
          CompensatedSum mass;
          for (std::size_t x = 0; x < vocab; ++x) mass.add(q_row[x] * (1.0 - f_row[x]));
          if (mass.value() > kUnreachableMass) {
            throw DegenerateResidual(
                "[P - Q]_+ vanishes at prefix (" +
                seq_to_key(seq_from_index(idx, level, vocab)) +
                ") but rejection there has positive probability");
          }
          g.assign(p_row.begin(), p_row.end());
        }
        fill_all(g);
      } else if (std::holds_alternative<OptimalGStar>(rule)) {
        fill_all(gstar_row(p_row, q_row, f_row));
      } else {
        const auto& params = std::get<LanternResidual>(rule).params;
        for (TokenId t = 0; t < vocab; ++t) {
          auto set = knn_aggregate_set(*params.embeddings, p_row, t, params.k, params.lambda);
          ProbRow target = lantern_target_row(p_row, set, t);
          ProbRow g = positive_residual(target, q_row, ones);
          if (!normalize_in_place(g)) g = target;
          std::copy(g.begin(), g.end(), table.row_at(level, idx, t).begin());
        }
      }
    }
  }
  return table;
}

RuleTables compile_rules(const ArModel& p, const ArModel& q, const AcceptanceRule& acceptance,
                         const ResamplingRule& resampling, std::size_t length) {
  AcceptanceTable f = AcceptanceTable::compile(p, q, acceptance, length);
  ResamplingTable g = ResamplingTable::compile(p, q, resampling, f);
  return RuleTables{std::move(f), std::move(g)};
}

}  // namespace relaxsd
