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

#include "relaxsd/decode.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

#include "relaxsd/error.hpp"
#include "relaxsd/numeric.hpp"

namespace relaxsd {

void validate_config(const ArModel& p, const ArModel& q, const SdConfig& cfg) {
  if (p.vocab_size() != q.vocab_size()) throw VocabMismatch("target and draft vocabularies differ");
  if (cfg.L < 1) throw InvalidArgument("draft length L must be at least 1");
  if (cfg.L + 1 > p.depth() || cfg.L + 1 > q.depth()) {
    throw DepthExceeded("L + 1 = " + std::to_string(cfg.L + 1) + " exceeds model depth");
  }
  validate_rule(cfg.acceptance, p.vocab_size(), cfg.L);
  validate_rule(cfg.resampling, p.vocab_size());
}

TokenSeq draft(const ArModel& q, std::size_t L, Rng& rng) {
  if (L >= q.depth()) {
    throw DepthExceeded("draft length " + std::to_string(L) + " needs depth > L, model has " +
                        std::to_string(q.depth()));
  }
  TokenSeq drafts;
  drafts.reserve(L);
  for (std::size_t i = 0; i < L; ++i) drafts.push_back(sample_next(q, drafts, rng));
  return drafts;
}

RoundOutcome verify(const ArModel& p, const ArModel& q, TokenSpan drafts, const RuleTables& rules,
                    Rng& rng) {
  const std::size_t L = drafts.size();
  if (rules.acceptance.length() != L || rules.resampling.length() != L) {
    throw InvalidArgument("rule tables were compiled for a different draft length");
  }
  if (L + 1 > p.depth()) throw DepthExceeded("bonus token needs depth >= L + 1");
  if (p.vocab_size() != q.vocab_size()) throw VocabMismatch("target and draft vocabularies differ");

  RoundOutcome out;
  out.tokens.reserve(L + 1);
  for (std::size_t i = 0; i < L; ++i) {
    const TokenSpan prefix = drafts.first(i);
    const double f = rules.acceptance.row(prefix)[drafts[i]];
    const double r = rng.uniform();
    if (r <= f) {
      out.tokens.push_back(drafts[i]);
      out.tau = i + 1;
      continue;
    }
    out.rejected_at = i + 1;
    out.tokens.push_back(sample_index(rules.resampling.row(prefix, drafts[i]), rng));
    return out;
  }
  out.bonus_used = true;
  out.tokens.push_back(sample_next(p, out.tokens, rng));
  return out;
}

RoundOutcome verify(const ArModel& p, const ArModel& q, TokenSpan drafts, const SdConfig& cfg,
                    Rng& rng) {
  if (drafts.size() != cfg.L) throw InvalidArgument("expected exactly L drafts");
  validate_config(p, q, cfg);
  return verify(p, q, drafts, compile_rules(p, q, cfg.acceptance, cfg.resampling, cfg.L), rng);
}

RoundOutcome run_round(const ArModel& p, const ArModel& q, const RuleTables& rules, Rng& rng) {
  TokenSeq drafts = draft(q, rules.acceptance.length(), rng);
  return verify(p, q, drafts, rules, rng);
}

namespace {

struct RoundRecord {
  std::uint32_t tau = 0;
  std::uint32_t tested = 0;
  std::size_t extended_index = 0;
};

}  // namespace

SimulationResult simulate(const ArModel& p, const ArModel& q, const RuleTables& rules,
                          std::uint64_t seed, std::size_t n_rounds,
                          const SimulateOptions& options) {
  if (n_rounds < 1) throw InvalidArgument("n_rounds must be at least 1");
  const std::size_t L = rules.acceptance.length();
  const std::size_t vocab = p.vocab_size();
  if (L + 1 > p.depth() || L + 1 > q.depth()) throw DepthExceeded("L + 1 exceeds model depth");

  std::vector<RoundRecord> records(n_rounds);
  std::vector<RoundOutcome> kept(options.keep_rounds ? n_rounds : 0);

  auto run_one = [&](std::size_t round) {
    Rng rng(derive_seed(seed, round));
    RoundOutcome outcome = run_round(p, q, rules, rng);
    // Virtual extension to L + 1 tokens from the target.
    TokenSeq seq = outcome.tokens;
    while (seq.size() < L + 1) seq.push_back(sample_next(p, seq, rng));
    RoundRecord& rec = records[round];
    rec.tau = static_cast<std::uint32_t>(outcome.tau);
    rec.tested = static_cast<std::uint32_t>(outcome.rejected_at.value_or(L));
    rec.extended_index = seq_index(seq, vocab);
    if (options.keep_rounds) kept[round] = std::move(outcome);
  };

  const unsigned threads = std::max(1u, std::min<unsigned>(options.threads, n_rounds));
  if (threads == 1) {
    for (std::size_t r = 0; r < n_rounds; ++r) run_one(r);
  } else {
    std::atomic<std::size_t> next{0};
    constexpr std::size_t kChunk = 1024;
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (;;) {
          const std::size_t begin = next.fetch_add(kChunk);
          if (begin >= n_rounds) return;
          const std::size_t end = std::min(n_rounds, begin + kChunk);
          for (std::size_t r = begin; r < end; ++r) run_one(r);
        }
      });
    }
    for (auto& th : pool) th.join();
  }

  // Deterministic reduction in round order.
  SimulationResult result;
  result.n_rounds = n_rounds;
  result.empirical_dist.assign(ipow(vocab, L + 1), 0.0);
  std::vector<std::size_t> tested(L, 0), accepted(L, 0);
  double sum = 0.0, sum_sq = 0.0;
  for (const RoundRecord& rec : records) {
    const double len = rec.tau + 1.0;
    sum += len;
    sum_sq += len * len;
    result.empirical_dist[rec.extended_index] += 1.0;
    for (std::size_t i = 0; i < rec.tested; ++i) ++tested[i];
    for (std::size_t i = 0; i < rec.tau; ++i) ++accepted[i];
  }
  const double n = static_cast<double>(n_rounds);
  result.mean_accepted_len = sum / n;
  if (n_rounds > 1) {
    const double var = std::max(0.0, (sum_sq - sum * sum / n) / (n - 1.0));
    result.stderr_accepted_len = std::sqrt(var / n);
  }
  for (double& c : result.empirical_dist) c /= n;
  result.per_position_accept_rate.resize(L);
  for (std::size_t i = 0; i < L; ++i) {
    result.per_position_accept_rate[i] =
        tested[i] == 0 ? 0.0 : static_cast<double>(accepted[i]) / static_cast<double>(tested[i]);
  }
  result.rounds = std::move(kept);
  return result;
}

SimulationResult simulate(const ArModel& p, const ArModel& q, const SdConfig& cfg,
                          std::size_t n_rounds, const SimulateOptions& options) {
  validate_config(p, q, cfg);
  RuleTables rules = compile_rules(p, q, cfg.acceptance, cfg.resampling, cfg.L);
  return simulate(p, q, rules, cfg.seed, n_rounds, options);
}

namespace {

AcceptanceRule truncate_rule(const AcceptanceRule& rule, std::size_t length) {
  if (const auto* r = std::get_if<MultiplicativeRelax>(&rule)) {
    MultiplicativeRelax shorter = *r;
    shorter.schedule.omegas.resize(length);
    return shorter;
  }
  return rule;
}

}  // namespace

TokenSeq generate_sequence(const ArModel& p, const ArModel& q, const SdConfig& cfg,
                           std::size_t total_len, Rng& rng) {
  if (total_len > p.depth() || total_len > q.depth()) {
    throw DepthExceeded("total_len " + std::to_string(total_len) + " exceeds model depth");
  }
  if (p.vocab_size() != q.vocab_size()) throw VocabMismatch("target and draft vocabularies differ");
  if (cfg.L < 1) throw InvalidArgument("draft length L must be at least 1");
  validate_rule(cfg.acceptance, p.vocab_size(), cfg.L);
  validate_rule(cfg.resampling, p.vocab_size());

  TokenSeq out;
  out.reserve(total_len);
  while (out.size() < total_len) {
    const std::size_t remaining = total_len - out.size();
    const std::size_t L = std::min(cfg.L, remaining - 1);
    ArModel p_root = p.rerooted(out);
    if (L == 0) {
      out.push_back(sample_next(p_root, {}, rng));
      continue;
    }
    ArModel q_root = q.rerooted(out);
    RuleTables rules =
        compile_rules(p_root, q_root, truncate_rule(cfg.acceptance, L), cfg.resampling, L);
    RoundOutcome outcome = run_round(p_root, q_root, rules, rng);
    out.insert(out.end(), outcome.tokens.begin(), outcome.tokens.end());
  }
  out.resize(total_len);
  return out;
}

TokenSeq generate_sequence(const ArModel& p, const ArModel& q, const SdConfig& cfg,
                           std::size_t total_len) {
  Rng rng(derive_seed(cfg.seed, 0));
  return generate_sequence(p, q, cfg, total_len, rng);
}

}  // namespace relaxsd
