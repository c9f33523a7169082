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

#include "relaxsd/exact.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include <json.hpp>

#include "relaxsd/error.hpp"
#include "relaxsd/numeric.hpp"

namespace relaxsd {

namespace {

void check_models(const ArModel& p, const ArModel& q, std::size_t needed_depth) {
  if (p.vocab_size() != q.vocab_size()) throw VocabMismatch("target and draft vocabularies differ");
  if (needed_depth > p.depth() || needed_depth > q.depth()) {
    throw DepthExceeded("needs model depth >= " + std::to_string(needed_depth));
  }
}

void check_tables(const ArModel& p, const RuleTables& rules) {
  if (rules.acceptance.vocab_size() != p.vocab_size() ||
      rules.resampling.vocab_size() != p.vocab_size()) {
    throw VocabMismatch("rule tables were compiled for a different vocabulary");
  }
  if (rules.acceptance.length() != rules.resampling.length()) {
    throw InvalidArgument("acceptance and resampling tables cover different draft lengths");
  }
}

void check_probabilities(const AcceptanceTable& f) {
  if (f.min_value() < 0.0 || f.max_value() > 1.0) {
    throw InvalidArgument("acceptance probabilities must lie in [0, 1] to define a decoder");
  }
}

/// W_i(x_{1:i}) = Q(x_{1:i}) prod_{k<=i} f_k(x_{1:k}) for i = 0..L.
std::vector<std::vector<double>> path_weights(const ArModel& q, const AcceptanceTable& f) {
  const std::size_t vocab = q.vocab_size();
  const std::size_t L = f.length();
  std::vector<std::vector<double>> w(L + 1);
  w[0] = {1.0};
  for (std::size_t i = 0; i < L; ++i) {
    w[i + 1].assign(ipow(vocab, i + 1), 0.0);
    for (std::size_t idx = 0; idx < w[i].size(); ++idx) {
      auto q_row = q.row_at(i, idx);
      auto f_row = f.row_at(i, idx);
      for (std::size_t t = 0; t < vocab; ++t) w[i + 1][idx * vocab + t] = w[i][idx] * q_row[t] * f_row[t];
    }
  }
  return w;
}

/// R_i(y | x_{1:i}) = sum_t Q(t | x_{1:i}) (1 - f(x_{1:i}, t)) G(y | x_{1:i}, t).
std::vector<std::vector<double>> rejection_mass_rows(const ArModel& q, const AcceptanceTable& f,
                                                     const ResamplingTable& g) {
  const std::size_t vocab = q.vocab_size();
  const std::size_t L = f.length();
  std::vector<std::vector<double>> r(L);
  for (std::size_t i = 0; i < L; ++i) {
    const std::size_t n = ipow(vocab, i);
    r[i].assign(n * vocab, 0.0);
    for (std::size_t idx = 0; idx < n; ++idx) {
      auto q_row = q.row_at(i, idx);
      auto f_row = f.row_at(i, idx);
      if (!g.depends_on_rejected()) {
        CompensatedSum mass;
        for (std::size_t t = 0; t < vocab; ++t) mass.add(q_row[t] * (1.0 - f_row[t]));
        auto g_row = g.row_at(i, idx, 0);
        for (std::size_t y = 0; y < vocab; ++y) r[i][idx * vocab + y] = mass.value() * g_row[y];
        continue;
      }
      for (std::size_t y = 0; y < vocab; ++y) {
        CompensatedSum s;
        for (TokenId t = 0; t < vocab; ++t) {
          s.add(q_row[t] * (1.0 - f_row[t]) * g.row_at(i, idx, t)[y]);
        }
        r[i][idx * vocab + y] = s.value();
      }
    }
  }
  return r;
}

}  // namespace

// ---------------------------------------------------------------------------

void ExactDist::validate(double tolerance) const {
  if (vocab == 0) throw DomainMismatch("vocabulary must be non-empty");
  if (probs.size() != ipow(vocab, length)) {
    throw DomainMismatch("distribution has " + std::to_string(probs.size()) + " entries, expected " +
                         std::to_string(ipow(vocab, length)));
  }
  for (double p : probs) {
    if (p < -tolerance || !std::isfinite(p)) throw NormalizationError("negative probability mass");
  }
  const double total = compensated_sum(probs);
  if (std::abs(total - 1.0) > tolerance) {
    throw NormalizationError("distribution sums to " + std::to_string(total));
  }
}

std::string ExactDist::to_json() const {
  nlohmann::ordered_json j;
  j["length"] = length;
  j["vocab"] = vocab;
  nlohmann::ordered_json mass = nlohmann::ordered_json::object();
  for (std::size_t idx = 0; idx < probs.size(); ++idx) {
    mass[seq_to_key(seq_from_index(idx, length, vocab))] = probs[idx];
  }
  j["probs"] = std::move(mass);
  return j.dump(2);
}

ExactDist ExactDist::from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    ExactDist d;
    d.length = j.at("length").get<std::size_t>();
    d.vocab = j.at("vocab").get<std::size_t>();
    if (d.vocab == 0) throw DomainMismatch("vocabulary must be non-empty");
    d.probs.assign(ipow(d.vocab, d.length), 0.0);
    std::vector<bool> seen(d.probs.size(), false);
    for (const auto& [key, value] : j.at("probs").items()) {
      TokenSeq seq = seq_from_key(key);
      if (seq.size() != d.length) throw DomainMismatch("sequence '" + key + "' has wrong length");
      for (TokenId t : seq) {
        if (t >= d.vocab) throw DomainMismatch("sequence '" + key + "' leaves the vocabulary");
      }
      const std::size_t idx = seq_index(seq, d.vocab);
      d.probs[idx] = value.get<double>();
      seen[idx] = true;
    }
    if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
      throw DomainMismatch("distribution JSON does not cover every sequence");
    }
    return d;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed distribution JSON: ") + e.what());
  }
}

ExactDist target_joint(const ArModel& p, std::size_t length) {
  if (length > p.depth()) throw DepthExceeded("joint length exceeds model depth");
  const std::size_t vocab = p.vocab_size();
  std::vector<double> cur{1.0};
  for (std::size_t level = 0; level < length; ++level) {
    std::vector<double> next(cur.size() * vocab);
    for (std::size_t idx = 0; idx < cur.size(); ++idx) {
      auto row = p.row_at(level, idx);
      for (std::size_t t = 0; t < vocab; ++t) next[idx * vocab + t] = cur[idx] * row[t];
    }
    cur = std::move(next);
  }
  return ExactDist{length, vocab, std::move(cur)};
}

ExactDist exact_output_dist_paths(const ArModel& p, const ArModel& q, const RuleTables& rules) {
  check_tables(p, rules);
  const std::size_t L = rules.acceptance.length();
  check_models(p, q, L + 1);
  check_probabilities(rules.acceptance);
  const std::size_t vocab = p.vocab_size();

  // settled[j][x_{1:j}]: mass of rounds whose decoded tokens end at length j.
  std::vector<std::vector<CompensatedSum>> settled(L + 2);
  for (std::size_t j = 1; j <= L + 1; ++j) settled[j].resize(ipow(vocab, j));

  std::function<void(std::size_t, std::size_t, double)> walk = [&](std::size_t level,
                                                                  std::size_t idx, double w) {
    if (level == L) {
      auto bonus = p.row_at(L, idx);
      for (std::size_t y = 0; y < vocab; ++y) settled[L + 1][idx * vocab + y].add(w * bonus[y]);
      return;
    }
    auto q_row = q.row_at(level, idx);
    auto f_row = rules.acceptance.row_at(level, idx);
    for (TokenId t = 0; t < vocab; ++t) {
      const double drafted = w * q_row[t];
      if (drafted == 0.0) continue;
      const double rejected = drafted * (1.0 - f_row[t]);
      if (rejected > 0.0) {
        auto g_row = rules.resampling.row_at(level, idx, t);
        for (std::size_t y = 0; y < vocab; ++y) {
          settled[level + 1][idx * vocab + y].add(rejected * g_row[y]);
        }
      }
      const double accepted = drafted * f_row[t];
      if (accepted > 0.0) walk(level + 1, idx * vocab + t, accepted);
    }
  };
  walk(0, 0, 1.0);

  // Virtual extension: continue every settled prefix with the target.
  std::vector<double> mass(vocab);
  for (std::size_t y = 0; y < vocab; ++y) mass[y] = settled[1][y].value();
  for (std::size_t level = 1; level <= L; ++level) {
    std::vector<double> next(mass.size() * vocab);
    for (std::size_t idx = 0; idx < mass.size(); ++idx) {
      auto row = p.row_at(level, idx);
      for (std::size_t y = 0; y < vocab; ++y) {
        next[idx * vocab + y] = mass[idx] * row[y] + settled[level + 1][idx * vocab + y].value();
      }
    }
    mass = std::move(next);
  }
  return ExactDist{L + 1, vocab, std::move(mass)};
}

ExactDist exact_output_dist_closed_form(const ArModel& p, const ArModel& q,
                                        const RuleTables& rules) {
  check_tables(p, rules);
  const std::size_t L = rules.acceptance.length();
  check_models(p, q, L + 1);
  check_probabilities(rules.acceptance);
  const std::size_t vocab = p.vocab_size();
  const auto w = path_weights(q, rules.acceptance);
  const auto r = rejection_mass_rows(q, rules.acceptance, rules.resampling);

  ExactDist out{L + 1, vocab, std::vector<double>(ipow(vocab, L + 1))};
  std::vector<double> cond(L + 1), suffix(L + 1);
  for (std::size_t seq_idx = 0; seq_idx < out.probs.size(); ++seq_idx) {
    const TokenSeq x = seq_from_index(seq_idx, L + 1, vocab);
    // cond[i] = P(x_{i+1} | x_{1:i}); suffix[m] = P(x_{m+1:L} | x_{1:m}).
    std::size_t prefix_idx = 0;
    for (std::size_t i = 0; i <= L; ++i) {
      cond[i] = p.row_at(i, prefix_idx)[x[i]];
      prefix_idx = prefix_idx * vocab + x[i];
    }
    suffix[L] = 1.0;
    for (std::size_t m = L; m-- > 0;) suffix[m] = suffix[m + 1] * cond[m];

    CompensatedSum phat;
    // j = 0: first token either accepted as drafted or resampled.
    phat.add(suffix[1] * (q.row_at(0, 0)[x[0]] * rules.acceptance.row_at(0, 0)[x[0]] +
                          r[0][x[0]]));
    prefix_idx = x[0];
    for (std::size_t j = 1; j < L; ++j) {
      const double qf = q.row_at(j, prefix_idx)[x[j]] * rules.acceptance.row_at(j, prefix_idx)[x[j]];
      const double bracket = qf - cond[j] + r[j][prefix_idx * vocab + x[j]];
      phat.add(suffix[j + 1] * w[j][prefix_idx] * bracket);
      prefix_idx = prefix_idx * vocab + x[j];
    }
    out.probs[seq_idx] = phat.value() * cond[L];
  }
  return out;
}

double exact_cross_check_gap(const ArModel& p, const ArModel& q, const RuleTables& rules) {
  const ExactDist a = exact_output_dist_paths(p, q, rules);
  const ExactDist b = exact_output_dist_closed_form(p, q, rules);
  double gap = 0.0;
  for (std::size_t i = 0; i < a.probs.size(); ++i) gap = std::max(gap, std::abs(a.probs[i] - b.probs[i]));
  return gap;
}

ExactDist exact_output_dist(const ArModel& p, const ArModel& q, const RuleTables& rules) {
  ExactDist a = exact_output_dist_paths(p, q, rules);
  const ExactDist b = exact_output_dist_closed_form(p, q, rules);
  for (std::size_t i = 0; i < a.probs.size(); ++i) {
    if (std::abs(a.probs[i] - b.probs[i]) > kCrossCheckTolerance) {
      throw CrossCheckFailed("path enumeration and closed form disagree at (" +
                             seq_to_key(seq_from_index(i, a.length, a.vocab)) + ")");
    }
  }
  return a;
}

ExactDist exact_output_dist(const ArModel& p, const ArModel& q, const SdConfig& cfg) {
  validate_config(p, q, cfg);
  return exact_output_dist(p, q, compile_rules(p, q, cfg.acceptance, cfg.resampling, cfg.L));
}

double exact_expected_accepted(const ArModel& p, const ArModel& q, const AcceptanceTable& f) {
  check_models(p, q, f.length());
  if (f.vocab_size() != p.vocab_size()) throw VocabMismatch("acceptance table vocabulary differs");
  const auto w = path_weights(q, f);
  CompensatedSum total;
  total.add(1.0);
  for (std::size_t i = 1; i < w.size(); ++i) {
    for (double x : w[i]) total.add(x);
  }
  return total.value();
}

double exact_expected_accepted(const ArModel& p, const ArModel& q, const AcceptanceRule& rule,
                               std::size_t L) {
  return exact_expected_accepted(p, q, AcceptanceTable::compile(p, q, rule, L));
}

double tv_exact(const ExactDist& a, const ExactDist& b) {
  if (a.length != b.length || a.vocab != b.vocab || a.probs.size() != b.probs.size()) {
    throw DomainMismatch("distributions live on different sequence spaces");
  }
  return half_l1(a.probs, b.probs);
}

double tvb_upper_bound(const ArModel& p, const ArModel& q, const AcceptanceTable& f,
                       const ResamplingTable& g) {
  const std::size_t L = f.length();
  check_models(p, q, L);
  if (g.length() != L) throw InvalidArgument("acceptance and resampling tables differ in length");
  const std::size_t vocab = p.vocab_size();
  const auto w = path_weights(q, f);
  const auto r = rejection_mass_rows(q, f, g);
  CompensatedSum total;
  for (std::size_t i = 0; i < L; ++i) {
    for (std::size_t idx = 0; idx < w[i].size(); ++idx) {
      if (w[i][idx] == 0.0) continue;
      auto p_row = p.row_at(i, idx);
      auto q_row = q.row_at(i, idx);
      auto f_row = f.row_at(i, idx);
      CompensatedSum inner;
      for (std::size_t y = 0; y < vocab; ++y) {
        inner.add(std::abs(q_row[y] * f_row[y] - p_row[y] + r[i][idx * vocab + y]));
      }
      total.add(w[i][idx] * inner.value());
    }
  }
  return 0.5 * total.value();
}

double tvb_upper_bound(const ArModel& p, const ArModel& q, const AcceptanceRule& acceptance,
                       const ResamplingRule& resampling, std::size_t L) {
  RuleTables rules = compile_rules(p, q, acceptance, resampling, L);
  return tvb_upper_bound(p, q, rules.acceptance, rules.resampling);
}

double tvb_gstar_reduced(const ArModel& p, const ArModel& q, const AcceptanceTable& f) {
  const std::size_t L = f.length();
  check_models(p, q, L);
  const std::size_t vocab = p.vocab_size();
  for (std::size_t i = 0; i < L; ++i) {
    const std::size_t n = ipow(vocab, i);
    for (std::size_t idx = 0; idx < n; ++idx) {
      auto p_row = p.row_at(i, idx);
      auto q_row = q.row_at(i, idx);
      auto f_row = f.row_at(i, idx);
      for (std::size_t y = 0; y < vocab; ++y) {
        const double floor = std::min(1.0, safe_ratio(p_row[y], q_row[y]));
        if (f_row[y] > 1.0 || f_row[y] < floor) {
          throw PremiseViolated("f = " + std::to_string(f_row[y]) + " outside [min{1,P/Q}, 1] at (" +
                                seq_to_key(seq_from_index(idx, i, vocab)) + ") token " +
                                std::to_string(y));
        }
      }
    }
  }
  const auto w = path_weights(q, f);
  CompensatedSum total;
  for (std::size_t i = 0; i < L; ++i) {
    for (std::size_t idx = 0; idx < w[i].size(); ++idx) {
      if (w[i][idx] == 0.0) continue;
      total.add(w[i][idx] *
                lp_claimed_minimum(p.row_at(i, idx), q.row_at(i, idx), f.row_at(i, idx)));
    }
  }
  return 0.5 * total.value();
}

double tvb_gstar_reduced(const ArModel& p, const ArModel& q, const AcceptanceRule& rule,
                         std::size_t L) {
  return tvb_gstar_reduced(p, q, AcceptanceTable::compile(p, q, rule, L));
}

// ---------------------------------------------------------------------------

double lp_objective(std::span<const double> p, std::span<const double> q,
                    std::span<const double> f, std::span<const double> g) {
  CompensatedSum r;
  for (std::size_t x = 0; x < p.size(); ++x) r.add((1.0 - f[x]) * q[x]);
  CompensatedSum obj;
  for (std::size_t x = 0; x < p.size(); ++x) obj.add(std::abs(p[x] - q[x] * f[x] - g[x] * r.value()));
  return obj.value();
}

double lp_claimed_minimum(std::span<const double> p, std::span<const double> q,
                          std::span<const double> f) {
  CompensatedSum s;
  for (std::size_t x = 0; x < p.size(); ++x) {
    s.add(std::abs(p[x] - q[x] * f[x]));
    s.add(-(1.0 - f[x]) * q[x]);
  }
  return s.value();
}

LpSolution brute_force_optimal_resample(std::span<const double> p, std::span<const double> q,
                                        std::span<const double> f, double grid_step) {
  const std::size_t vocab = p.size();
  if (q.size() != vocab || f.size() != vocab) throw InvalidArgument("row lengths differ");
  if (vocab == 0) throw InvalidArgument("empty rows");
  if (vocab > 4) throw VocabTooLarge("simplex grid search supports V <= 4, got " + std::to_string(vocab));
  if (!(grid_step > 0.0 && grid_step <= 0.01)) throw InvalidArgument("grid_step must be in (0, 0.01]");

  const auto units = static_cast<std::size_t>(std::llround(1.0 / grid_step));
  LpSolution best;
  best.best_objective = std::numeric_limits<double>::infinity();
  ProbRow g(vocab, 0.0);
  std::vector<std::size_t> counts(vocab, 0);

  // Every composition of `units` into `vocab` non-negative parts.
  std::function<void(std::size_t, std::size_t)> enumerate = [&](std::size_t pos, std::size_t left) {
    if (pos + 1 == vocab) {
      counts[pos] = left;
      for (std::size_t x = 0; x < vocab; ++x) g[x] = static_cast<double>(counts[x]) / units;
      const double obj = lp_objective(p, q, f, g);
      if (obj < best.best_objective) {
        best.best_objective = obj;
        best.best_g = g;
      }
      return;
    }
    for (std::size_t c = 0; c <= left; ++c) {
      counts[pos] = c;
      enumerate(pos + 1, left - c);
    }
  };
  enumerate(0, units);

  // Pairwise mass transfer with shrinking steps; the objective is piecewise linear.
  g = best.best_g;
  for (double step = grid_step / 2; step > 1e-12; step /= 2) {
    bool improved = true;
    while (improved) {
      improved = false;
      for (std::size_t a = 0; a < vocab; ++a) {
        for (std::size_t b = 0; b < vocab; ++b) {
          if (a == b || g[a] <= 0.0) continue;
          const double move = std::min(step, g[a]);
          ProbRow trial = g;
          trial[a] -= move;
          trial[b] += move;
          const double obj = lp_objective(p, q, f, trial);
          if (obj < best.best_objective - 1e-15) {
            best.best_objective = obj;
            g = std::move(trial);
            improved = true;
          }
        }
      }
    }
  }
  best.best_g = g;
  return best;
}

double verify_proposition1(const ArModel& p, const ArModel& q, const AcceptanceTable& f,
                           TokenSpan prefix) {
  if (f.vocab_size() != p.vocab_size()) throw VocabMismatch("acceptance table vocabulary differs");
  auto p_row = p.row(prefix);
  auto q_row = q.row(prefix);
  auto f_row = f.row(prefix);
  for (std::size_t x = 0; x < p_row.size(); ++x) {
    const double vanilla = std::min(1.0, safe_ratio(p_row[x], q_row[x]));
    if (f_row[x] < vanilla) {
      throw DominanceViolated("f = " + std::to_string(f_row[x]) + " < vanilla " +
                              std::to_string(vanilla) + " at (" + seq_to_key(prefix) + ") token " +
                              std::to_string(x));
    }
  }
  const ProbRow g_van = resample_dist_vanilla(p, q, prefix);
  const ProbRow g_star = resample_dist_gstar(p, q, prefix, f_row);
  double diff = 0.0;
  for (std::size_t x = 0; x < g_van.size(); ++x) diff = std::max(diff, std::abs(g_van[x] - g_star[x]));
  return diff;
}

double verify_proposition1(const ArModel& p, const ArModel& q, const AcceptanceRule& rule,
                           std::size_t L, TokenSpan prefix) {
  if (prefix.size() >= L) throw DepthExceeded("prefix is longer than the draft positions");
  return verify_proposition1(p, q, AcceptanceTable::compile(p, q, rule, L), prefix);
}

// ---------------------------------------------------------------------------

bool dominates_vanilla(const ArModel& p, const ArModel& q, const AcceptanceTable& f,
                       std::size_t position) {
  const std::size_t level = position - 1;
  const std::size_t n = ipow(p.vocab_size(), level);
  for (std::size_t idx = 0; idx < n; ++idx) {
    auto p_row = p.row_at(level, idx);
    auto q_row = q.row_at(level, idx);
    auto f_row = f.row_at(level, idx);
    for (std::size_t x = 0; x < p_row.size(); ++x) {
      if (f_row[x] < std::min(1.0, safe_ratio(p_row[x], q_row[x]))) return false;
    }
  }
  return true;
}

namespace {

struct TwoPositionMoments {
  double e_f1 = 0.0;  // E_{X1~Q}[f1]
  double e_f2 = 0.0;  // E_{(X1,X2)~Q}[f2]
};

TwoPositionMoments moments(const ArModel& q, const AcceptanceTable& f) {
  const std::size_t vocab = q.vocab_size();
  auto q0 = q.row_at(0, 0);
  auto f0 = f.row_at(0, 0);
  CompensatedSum e1, e2;
  for (std::size_t x1 = 0; x1 < vocab; ++x1) {
    e1.add(q0[x1] * f0[x1]);
    auto q1 = q.row_at(1, x1);
    auto f1 = f.row_at(1, x1);
    for (std::size_t x2 = 0; x2 < vocab; ++x2) e2.add(q0[x1] * q1[x2] * f1[x2]);
  }
  return {e1.value(), e2.value()};
}

/// Q(X+) - Q(X-) with X+ = {x : P(x) >= Q(x) f(x)}.
double signed_mass(std::span<const double> p, std::span<const double> q,
                   std::span<const double> f) {
  CompensatedSum s;
  for (std::size_t x = 0; x < p.size(); ++x) {
    const bool plus = q[x] == 0.0 || p[x] / q[x] >= f[x];
    s.add(plus ? q[x] : -q[x]);
  }
  return s.value();
}

void require_two_positions(const ArModel& p, const ArModel& q, const AcceptanceTable& f) {
  if (f.length() != 2) throw InvalidArgument("the two-position analysis needs L = 2");
  if (f.vocab_size() != p.vocab_size()) throw VocabMismatch("acceptance table vocabulary differs");
  check_models(p, q, 2);
}

}  // namespace

double compensating_c1(const ArModel& p, const ArModel& q, const AcceptanceTable& f, double c2) {
  require_two_positions(p, q, f);
  const auto m = moments(q, f);
  return -m.e_f1 * c2 / (1.0 + m.e_f2 + c2);
}

Proposition5Check proposition5_check(const ArModel& p, const ArModel& q, const AcceptanceTable& f) {
  if (f.length() < 2) throw InvalidArgument("needs at least two draft positions");
  check_models(p, q, 2);
  const std::size_t vocab = p.vocab_size();
  auto q0 = q.row_at(0, 0);
  CompensatedSum e2, delta;
  for (std::size_t x1 = 0; x1 < vocab; ++x1) {
    auto p1 = p.row_at(1, x1);
    auto q1 = q.row_at(1, x1);
    auto f1 = f.row_at(1, x1);
    for (std::size_t x2 = 0; x2 < vocab; ++x2) e2.add(q0[x1] * q1[x2] * f1[x2]);
    delta.add(q0[x1] * lp_claimed_minimum(p1, q1, f1));
  }
  Proposition5Check out;
  out.expected_f2 = e2.value();
  out.delta = delta.value();
  out.margin = out.expected_f2 - out.delta - 0.2;
  return out;
}

PerturbationPair perturbation_experiment(const ArModel& p, const ArModel& q,
                                         const AcceptanceTable& base, double c2,
                                         const PerturbationOptions& options) {
  require_two_positions(p, q, base);
  if (!(std::abs(c2) <= options.max_abs_c2)) {
    throw InvalidArgument("|c2| must not exceed " + std::to_string(options.max_abs_c2));
  }
  const std::size_t vocab = p.vocab_size();

  PerturbationPair out;
  out.base_expected_len = exact_expected_accepted(p, q, base);
  out.base_tvb = tvb_upper_bound(p, q, base, ResamplingTable::compile(p, q, OptimalGStar{}, base));

  // Signed-mass balance of the unperturbed rule.
  out.assumption1_first = std::abs(signed_mass(p.row_at(0, 0), q.row_at(0, 0), base.row_at(0, 0)));
  for (std::size_t x1 = 0; x1 < vocab; ++x1) {
    out.assumption1_second = std::max(
        out.assumption1_second,
        std::abs(signed_mass(p.row_at(1, x1), q.row_at(1, x1), base.row_at(1, x1))));
  }
  const double a1 = std::max(out.assumption1_first, out.assumption1_second);
  const double a2 = check_closeness(p, q, 1.0).worst_tv;
  out.dominates_vanilla_at_2 = dominates_vanilla(p, q, base, 2);
  const bool ok = a1 <= options.assumption1_threshold && a2 <= options.closeness_threshold &&
                  out.dominates_vanilla_at_2;

  auto run_arm = [&](double arm_c2) {
    PerturbationReport rep;
    rep.c2 = arm_c2;
    rep.c1 = compensating_c1(p, q, base, arm_c2);
    AcceptanceTable perturbed = base;
    perturbed.shift_position(1, rep.c1);
    perturbed.shift_position(2, arm_c2);
    if (perturbed.min_value() < 0.0 ||
        (!options.allow_formal_overshoot && perturbed.max_value() > 1.0)) {
      throw ClampViolation("perturbed acceptance leaves the admissible range (min " +
                           std::to_string(perturbed.min_value()) + ", max " +
                           std::to_string(perturbed.max_value()) + ")");
    }
    rep.expected_len = exact_expected_accepted(p, q, perturbed);
    if (std::abs(rep.expected_len - out.base_expected_len) > 1e-9) {
      throw ExpectationMismatch("perturbation changed E[tau+1] from " +
                                std::to_string(out.base_expected_len) + " to " +
                                std::to_string(rep.expected_len));
    }
    rep.tvb = tvb_upper_bound(p, q, perturbed,
                              ResamplingTable::compile(p, q, OptimalGStar{}, perturbed));
    rep.assumptions_ok = ok;
    rep.assumption1_margin = a1;
    rep.assumption2_margin = a2;
    return rep;
  };
  out.arm = run_arm(c2);
  out.mirror = run_arm(-c2);
  return out;
}

PerturbationPair perturbation_experiment(const ArModel& p, const ArModel& q,
                                         const Schedule& base_omegas, double c2,
                                         const PerturbationOptions& options) {
  if (base_omegas.length() != 2) throw InvalidArgument("the two-position analysis needs L = 2");
  return perturbation_experiment(
      p, q, AcceptanceTable::compile(p, q, MultiplicativeRelax{base_omegas}, 2), c2, options);
}

}  // namespace relaxsd
