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

// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "relaxsd/error.hpp"
#include "relaxsd/exact.hpp"
#include "relaxsd/experiment.hpp"
#include "relaxsd/schedules.hpp"

namespace {

using namespace relaxsd;
using Clock = std::chrono::steady_clock;

constexpr double kConcentration = 1.0;

struct Pair {
  ArModel p;
  ArModel q;
};

Pair make_pair_models(std::size_t vocab, std::size_t depth, std::uint64_t stream, std::uint64_t index) {
  return {random_model(vocab, depth, kConcentration, derive_seed(stream, 2 * index)),
          random_model(vocab, depth, kConcentration, derive_seed(stream, 2 * index + 1))};
}

/// Pair i of the shared grid: V cycles through 2..5, L through 1..3.
struct GridPair {
  std::size_t V;
  std::size_t L;
  Pair models;
};

std::vector<GridPair> shared_pairs() {
  std::vector<GridPair> out;
  for (std::uint64_t i = 0; i < 100; ++i) {
    const std::size_t V = 2 + i % 4;
    const std::size_t L = 1 + (i / 4) % 3;
    out.push_back({V, L, make_pair_models(V, L + 1, 1, i)});
  }
  return out;
}

std::vector<Pair> close_pairs(std::size_t vocab, std::size_t depth, std::uint64_t stream, std::size_t wanted,
                              double threshold) {
  std::vector<Pair> out;
  for (std::uint64_t i = 0; out.size() < wanted && i < 50'000'000; ++i) {
    Pair pair = make_pair_models(vocab, depth, stream, i);
    if (check_closeness(pair.p, pair.q, threshold).close) out.push_back(std::move(pair));
  }
  return out;
}

int failures = 0;

void report(const char* id, const char* name, bool ok, const std::string& detail, Clock::time_point start) {
  const double secs = std::chrono::duration<double>(Clock::now() - start).count();
  std::printf("[%s] %s %s: %s (%.1f s)\n", ok ? "PASS" : "FAIL", id, name, detail.c_str(), secs);
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", x);
  return buf;
}

double elapsed(Clock::time_point start) { return std::chrono::duration<double>(Clock::now() - start).count(); }

void losslessness(const std::vector<GridPair>& pairs) {
  const auto start = Clock::now();
  double worst = 0.0;
  for (const auto& g : pairs) {
    RuleTables rules = compile_rules(g.models.p, g.models.q, Vanilla{}, VanillaResidual{}, g.L);
    worst = std::max(worst, tv_exact(exact_output_dist(g.models.p, g.models.q, rules), target_joint(g.models.p, g.L + 1)));
  }
  const double secs = elapsed(start);
  report("C1", "losslessness", worst <= 1e-12 && secs <= 30.0,
         "max TV(P-hat, P) = " + num(worst) + " over 100 pairs, limit 1e-12", start);
}

void bound_soundness(const std::vector<GridPair>& pairs) {
  const auto start = Clock::now();
  double worst_slack = -INFINITY, worst_vanilla = 0.0;
  std::size_t configs = 0;
  for (const auto& g : pairs) {
    const auto& [p, q] = g.models;
    const ExactDist target = target_joint(p, g.L + 1);
    const int len = static_cast<int>(g.L);
    for (double d : {1.0, 1.5, 2.0, 3.0}) {
      for (const Schedule& s : {uniform_schedule(d, len), exp_schedule(d, 0.7, len)}) {
        RuleTables rules = compile_rules(p, q, MultiplicativeRelax{s}, OptimalGStar{}, g.L);
        const double tv = tv_exact(exact_output_dist(p, q, rules), target);
        worst_slack = std::max(worst_slack, tv - tvb_upper_bound(p, q, rules.acceptance, rules.resampling));
        ++configs;
      }
    }
    RuleTables van = compile_rules(p, q, Vanilla{}, VanillaResidual{}, g.L);
    worst_vanilla = std::max(worst_vanilla, tvb_upper_bound(p, q, van.acceptance, van.resampling));
  }
  const bool ok = worst_slack <= 1e-10 && worst_vanilla <= 1e-12 && elapsed(start) <= 120.0;
  report("C2", "bound soundness and tightness", ok,
         "max (TV - bound) = " + num(worst_slack) + " over " + std::to_string(configs) +
             " configs; max vanilla bound = " + num(worst_vanilla),
         start);
}

void expected_length() {
  const auto start = Clock::now();
  double worst_z = 0.0;
  for (std::uint64_t i = 0; i < 20; ++i) {
    const std::size_t V = 2 + i % 3;
    const std::size_t L = 1 + i % 3;
    const int len = static_cast<int>(L);
    Pair m = make_pair_models(V, L + 1, 3, i);
    auto emb = std::make_shared<const TokenEmbedding>(TokenEmbedding::random(V, 3, i));
    LanternParams lp{1, 1.5, emb};
    SdConfig cfg;
    cfg.L = L;
    cfg.seed = derive_seed(33, i);
    switch (i % 5) {
      case 0: break;
      case 1: cfg.acceptance = MultiplicativeRelax{uniform_schedule(1.8, len)}; cfg.resampling = OptimalGStar{}; break;
      case 2: cfg.acceptance = MultiplicativeRelax{exp_schedule(1.1, 0.7, len)}; cfg.resampling = OptimalGStar{}; break;
      case 3: cfg.acceptance = MultiplicativeRelax{linear_schedule(2.0, 8, len)}; cfg.resampling = VanillaResidual{}; break;
      case 4: cfg.acceptance = LanternPP{lp}; cfg.resampling = LanternResidual{lp}; break;
    }
    const double exact = exact_expected_accepted(m.p, m.q, AcceptanceTable::compile(m.p, m.q, cfg.acceptance, L));
    SimulationResult mc = simulate(m.p, m.q, cfg, 100000);
    const double diff = std::abs(mc.mean_accepted_len - exact);
    const double z = mc.stderr_accepted_len > 0.0 ? diff / mc.stderr_accepted_len : (diff <= 1e-12 ? 0.0 : INFINITY);
    worst_z = std::max(worst_z, z);
  }
  report("C3", "expected accepted length", worst_z <= 3.0 && elapsed(start) <= 120.0,
         "max |MC - exact| / stderr = " + num(worst_z) + " over 20 configs, limit 3", start);
}

void gstar_optimality() {
  const auto start = Clock::now();
  constexpr double kStep = 0.005;
  double worst_excess = -INFINITY, worst_identity = 0.0;
  for (std::uint64_t i = 0; i < 50; ++i) {
    Pair m = make_pair_models(3, 1, 4, i);
    auto p = m.p.row({});
    auto q = m.q.row({});
    Rng rng(derive_seed(44, i));
    ProbRow f(3);
    for (std::size_t x = 0; x < 3; ++x) {
      const double floor = std::min(1.0, p[x] / q[x]);
      f[x] = floor + rng.uniform() * (1.0 - floor);
    }
    const double analytic = lp_objective(p, q, f, gstar_row(p, q, f));
    const LpSolution brute = brute_force_optimal_resample(p, q, f, kStep);
    worst_excess = std::max(worst_excess, analytic - brute.best_objective);
    worst_identity = std::max(worst_identity, std::abs(analytic - lp_claimed_minimum(p, q, f)));
  }
  const bool ok = worst_excess <= 3 * kStep && worst_identity <= 1e-12 && elapsed(start) <= 60.0;
  report("C4", "optimal resampling", ok,
         "max (analytic - grid minimum) = " + num(worst_excess) + " (slack 0.015); max identity gap = " +
             num(worst_identity),
         start);
}

void proposition1(const std::vector<GridPair>& pairs) {
  const auto start = Clock::now();
  double worst = 0.0;
  std::size_t checked = 0, degenerate = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& g = pairs[i];
    const auto& [p, q] = g.models;
    const int len = static_cast<int>(g.L);
    std::vector<Schedule> schedules{uniform_schedule(1.0, len), uniform_schedule(1.5, len),
                                    uniform_schedule(3.0, len), linear_schedule(2.0, 8, len)};
    Rng rng(derive_seed(55, i));
    Schedule random_omegas = uniform_schedule(1.0, len);
    for (double& w : random_omegas.omegas) w = 1.0 + 2.0 * rng.uniform();
    schedules.push_back(random_omegas);
    for (const Schedule& s : schedules) {
      AcceptanceTable f = AcceptanceTable::compile(p, q, MultiplicativeRelax{s}, g.L);
      for (std::size_t level = 0; level < g.L; ++level) {
        for (std::size_t idx = 0; idx < ipow(g.V, level); ++idx) {
          try {
            worst = std::max(worst, verify_proposition1(p, q, f, seq_from_index(idx, level, g.V)));
            ++checked;
          } catch (const DegenerateResidual&) {
            ++degenerate;
          }
        }
      }
    }
  }
  report("C5", "G* equals the vanilla residual", worst <= 1e-12,
         "max |G* - G_van| = " + num(worst) + " over " + std::to_string(checked) + " prefixes (" +
             std::to_string(degenerate) + " degenerate skipped)",
         start);
}

void self_consistency() {
  const auto start = Clock::now();
  double worst = 0.0;
  for (std::uint64_t i = 0; i < 50; ++i) {
    const std::size_t V = 2 + i % 4;
    const std::size_t L = 1 + (i / 4) % 3;
    const int len = static_cast<int>(L);
    Pair m = make_pair_models(V, L + 1, 6, i);
    auto emb = std::make_shared<const TokenEmbedding>(TokenEmbedding::random(V, 3, i));
    LanternParams lp{static_cast<int>(std::min<std::size_t>(2, V - 1)), 1.0 + (i % 3) * 0.5, emb};
    Schedule mixed = uniform_schedule(1.0, len);
    mixed.omegas.front() = 2.0;
    mixed.omegas.back() = 0.5;
    std::vector<std::pair<AcceptanceRule, ResamplingRule>> variants;
    switch (i % 5) {
      case 0: variants = {{Vanilla{}, VanillaResidual{}}, {Vanilla{}, OptimalGStar{}}}; break;
      case 1: variants = {{MultiplicativeRelax{uniform_schedule(2.0, len)}, OptimalGStar{}},
                          {MultiplicativeRelax{uniform_schedule(2.0, len)}, VanillaResidual{}}}; break;
      case 2: variants = {{MultiplicativeRelax{exp_schedule(1.1, 0.7, len)}, OptimalGStar{}},
                          {MultiplicativeRelax{mixed}, OptimalGStar{}}}; break;
      case 3: variants = {{MultiplicativeRelax{linear_schedule(1.5, 8, len)}, OptimalGStar{}},
                          {MultiplicativeRelax{uniform_schedule(0.7, len)}, OptimalGStar{}}}; break;
      case 4: variants = {{LanternPP{lp}, LanternResidual{lp}}, {LanternPP{lp}, OptimalGStar{}}}; break;
    }
    for (const auto& [acc, res] : variants) {
      worst = std::max(worst, exact_cross_check_gap(m.p, m.q, compile_rules(m.p, m.q, acc, res, L)));
    }
  }
  report("C6", "path enumeration vs closed form", worst <= 1e-10,
         "max |difference| = " + num(worst) + " over 50 configs, limit 1e-10", start);
}

struct CurvePoint {
  double len;
  double tv;
};

std::vector<CurvePoint> tradeoff_curve(const Pair& m, bool annealed) {
  std::vector<CurvePoint> curve;
  const ExactDist target = target_joint(m.p, 3);
  for (int step = 11; step <= 40; ++step) {
    const double d = step / 10.0;
    Schedule s = annealed ? exp_schedule(d, 0.7, 2) : uniform_schedule(d, 2);
    RuleTables rules = compile_rules(m.p, m.q, MultiplicativeRelax{s}, OptimalGStar{}, 2);
    curve.push_back({exact_expected_accepted(m.p, m.q, rules.acceptance),
                     tv_exact(exact_output_dist(m.p, m.q, rules), target)});
  }
  return curve;
}

void annealing_dominance() {
  const auto start = Clock::now();

  // (a) perturbation pairs on L = 2.
  std::size_t admitted = 0, wins = 0, clamped = 0, drawn = 0;
  const Schedule base = uniform_schedule(1.5, 2);
  for (std::uint64_t i = 0; admitted < 200 && i < 50'000'000; ++i) {
    Pair m = make_pair_models(3, 2, 7, i);
    ++drawn;
    if (!check_closeness(m.p, m.q, 0.4).close) continue;
    PerturbationPair r;
    try {
      r = perturbation_experiment(m.p, m.q, base, -0.02);
    } catch (const ClampViolation&) {
      ++clamped;
      continue;
    }
    if (std::max(r.assumption1_first, r.assumption1_second) > 0.3) continue;
    ++admitted;
    // arm: c2 = -0.02 relaxes position 1; mirror: c2 = +0.02 tightens it.
    if (r.arm.tvb <= r.mirror.tvb) ++wins;
  }
  const double frac_a = admitted ? static_cast<double>(wins) / admitted : 0.0;

  // (b) trade-off curves at matched expected length.
  std::size_t matched = 0, better = 0;
  const std::vector<Pair> pairs = close_pairs(3, 3, 8, 50, 0.4);
  for (const Pair& m : pairs) {
    const auto uniform = tradeoff_curve(m, false);
    const auto annealed = tradeoff_curve(m, true);
    for (const CurvePoint& u : uniform) {
      for (std::size_t j = 0; j + 1 < annealed.size(); ++j) {
        const double a = annealed[j].len, b = annealed[j + 1].len;
        if ((u.len - a) * (u.len - b) > 0.0 || a == b) continue;
        const double t = (u.len - a) / (b - a);
        const double tv = annealed[j].tv + t * (annealed[j + 1].tv - annealed[j].tv);
        ++matched;
        if (tv <= u.tv) ++better;
        break;
      }
    }
  }
  const double frac_b = matched ? static_cast<double>(better) / matched : 0.0;
  const bool ok = admitted == 200 && frac_a >= 0.9 && pairs.size() == 50 && frac_b >= 0.8 && elapsed(start) <= 300.0;
  report("C7", "annealing dominance", ok,
         "(a) relax-early arm wins " + std::to_string(wins) + "/" + std::to_string(admitted) + " = " + num(frac_a) +
             " (need 0.9; " + std::to_string(drawn) + " drawn, " + std::to_string(clamped) +
             " clamped); (b) annealed TV <= uniform at " + std::to_string(better) + "/" + std::to_string(matched) +
             " matched points = " + num(frac_b) + " (need 0.8)",
         start);
}

void lantern_improvement() {
  const auto start = Clock::now();
  bool ok = true;
  std::string detail;
  for (int k : {2, 3}) {
    for (double lambda : {1.0, 2.0}) {
      std::size_t strict = 0, worse = 0;
      double worst = 0.0;
      for (std::uint64_t i = 0; i < 30; ++i) {
        Pair m = make_pair_models(6, 3, 9, i);
        auto emb = std::make_shared<const TokenEmbedding>(TokenEmbedding::random(6, 4, derive_seed(99, i)));
        LanternParams lp{k, lambda, emb};
        const ExactDist target = target_joint(m.p, 3);
        const double plain = tv_exact(exact_output_dist(m.p, m.q, compile_rules(m.p, m.q, LanternPP{lp}, LanternResidual{lp}, 2)), target);
        const double gstar = tv_exact(exact_output_dist(m.p, m.q, compile_rules(m.p, m.q, LanternPP{lp}, OptimalGStar{}, 2)), target);
        if (gstar > plain + 1e-12) {
          ++worse;
          worst = std::max(worst, gstar - plain);
        } else if (gstar < plain - 1e-12) {
          ++strict;
        }
      }
      const bool cell_ok = worse == 0 && strict >= 15;
      ok = ok && cell_ok;
      if (!detail.empty()) detail += "; ";
      detail += "k=" + std::to_string(k) + " lambda=" + num(lambda) + ": strict " + std::to_string(strict) +
                "/30, worse " + std::to_string(worse) + (worse ? " (max +" + num(worst) + ")" : "");
    }
  }
  report("C8", "LANTERN++ with optimal resampling", ok, detail, start);
}

void proposition5() {
  const auto start = Clock::now();
  const std::vector<Pair> pairs = close_pairs(3, 2, 10, 100, 0.4);
  double worst = INFINITY;
  std::size_t rules_checked = 0;
  bool dominance = true;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& [p, q] = pairs[i];
    auto emb = std::make_shared<const TokenEmbedding>(TokenEmbedding::random(3, 3, i));
    std::vector<AcceptanceRule> rules{Vanilla{}, MultiplicativeRelax{uniform_schedule(1.5, 2)},
                                      MultiplicativeRelax{uniform_schedule(3.0, 2)},
                                      MultiplicativeRelax{linear_schedule(2.0, 8, 2)},
                                      LanternPP{{2, 1.0, emb}}};
    for (const AcceptanceRule& rule : rules) {
      AcceptanceTable f = AcceptanceTable::compile(p, q, rule, 2);
      dominance = dominance && dominates_vanilla(p, q, f, 2);
      worst = std::min(worst, proposition5_check(p, q, f).margin);
      ++rules_checked;
    }
  }
  report("C9", "second-position positivity", pairs.size() == 100 && dominance && worst >= 0.0,
         "min (E_Q[f2] - Delta - 1/5) = " + num(worst) + " over " + std::to_string(rules_checked) +
             " rules on 100 close models",
         start);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string drop_last_column(const std::string& csv) {
  std::istringstream in(csv);
  std::string line, out;
  while (std::getline(in, line)) out += line.substr(0, line.rfind(',')) + "\n";
  return out;
}

void determinism() {
  const auto start = Clock::now();
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "relaxsd_acceptance_determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::ofstream(dir / "sweep.json") << R"({
    "models": {"random": {"vocab_size": 4, "depth": 3, "concentration": 1.0, "seed_p": 21, "seed_q": 22}},
    "L": 2, "seed": 17,
    "sweep": {"deltas": [1.0, 1.5, 2.0, 3.0], "methods": ["uniform", "cool_exp", "cool_linear", "lantern", "lantern_gstar", "vanilla"],
              "nu": 0.7, "ell": 8, "ks": [2, 3], "lambdas": [1.0, 2.0], "n_rounds": 20000}
  })";
  std::ostringstream log;
  std::vector<std::string> outputs;
  bool exit_ok = true;
  for (unsigned threads : {1u, 1u, 2u, 8u}) {
    RunOptions opts;
    opts.threads = threads;
    opts.out_override = (dir / ("t" + std::to_string(outputs.size()) + ".csv")).string();
    exit_ok = exit_ok && cmd_sweep((dir / "sweep.json").string(), opts, log) == 0;
    outputs.push_back(drop_last_column(read_file(*opts.out_override)));
  }
  bool same = true;
  for (const auto& o : outputs) same = same && o == outputs.front();
  fs::remove_all(dir);
  report("C10", "sweep determinism", exit_ok && same && !outputs.front().empty(),
         std::string(same ? "identical" : "different") + " CSV (minus wall_ms) across reruns at 1, 1, 2, 8 threads",
         start);
}

}  // namespace

int main() {
  const auto pairs = shared_pairs();
  losslessness(pairs);
  bound_soundness(pairs);
  expected_length();
  gstar_optimality();
  proposition1(pairs);
  self_consistency();
  annealing_dominance();
  lantern_improvement();
  proposition5();
  determinism();
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
