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

#include "relaxsd/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <memory>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "relaxsd/error.hpp"
#include "relaxsd/exact.hpp"
#include "relaxsd/schedules.hpp"

namespace relaxsd {

namespace {

using json = nlohmann::json;

void reject_unknown(const json& obj, std::initializer_list<std::string_view> allowed,
                    const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ConfigError("unknown key '" + key + "' in " + where);
    }
  }
}

template <typename T>
T read(const json& obj, const char* key, T fallback, const std::string& where) {
  if (!obj.contains(key)) return fallback;
  try {
    const json& v = obj.at(key);
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(where + "." + key + " must be a boolean");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError(where + "." + key + " must be an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0) {
          throw ConfigError(where + "." + key + " must be non-negative");
        }
      }
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(where + "." + key + " must be a number");
    } else {
      if (!v.is_string()) throw ConfigError(where + "." + key + " must be a string");
    }
    return v.get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

template <typename T>
std::vector<T> read_list(const json& obj, const char* key, std::vector<T> fallback,
                         const std::string& where) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_array()) throw ConfigError(where + "." + key + " must be an array");
  std::vector<T> out;
  for (const json& item : v) {
    if (!item.is_number() || (std::is_integral_v<T> && !item.is_number_integer())) {
      throw ConfigError(where + "." + key + " must hold numbers");
    }
    out.push_back(item.get<T>());
  }
  return out;
}

ModelSpec parse_models(const json& j, std::size_t L) {
  reject_unknown(j, {"random", "inline"}, "models");
  if (j.contains("random") == j.contains("inline")) {
    throw ConfigError("models needs exactly one of 'random' or 'inline'");
  }
  ModelSpec spec;
  if (j.contains("random")) {
    const json& r = j.at("random");
    reject_unknown(r, {"vocab_size", "depth", "concentration", "seed_p", "seed_q"}, "models.random");
    RandomModelSpec m;
    m.vocab_size = read<std::size_t>(r, "vocab_size", m.vocab_size, "models.random");
    m.depth = read<std::size_t>(r, "depth", L + 1, "models.random");
    m.concentration = read<double>(r, "concentration", m.concentration, "models.random");
    m.seed_p = read<std::uint64_t>(r, "seed_p", m.seed_p, "models.random");
    m.seed_q = read<std::uint64_t>(r, "seed_q", m.seed_q, "models.random");
    if (m.vocab_size < 1) throw ConfigError("models.random.vocab_size must be positive");
    if (!(m.concentration > 0.0)) throw ConfigError("models.random.concentration must be positive");
    if (m.depth < L + 1) throw ConfigError("model depth must be at least L + 1");
    spec.random = m;
  } else {
    const json& in = j.at("inline");
    reject_unknown(in, {"P", "Q"}, "models.inline");
    if (!in.contains("P") || !in.contains("Q")) throw ConfigError("models.inline needs P and Q");
    try {
      ArModel p = ArModel::from_json(in.at("P").dump());
      ArModel q = ArModel::from_json(in.at("Q").dump());
      if (p.vocab_size() != q.vocab_size()) throw ConfigError("inline P and Q vocabularies differ");
      if (p.depth() < L + 1 || q.depth() < L + 1) throw ConfigError("model depth must be at least L + 1");
      spec.inline_models.emplace(std::move(p), std::move(q));
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      throw ConfigError(std::string("models.inline: ") + e.what());
    }
  }
  return spec;
}

MethodSpec parse_method(const json& j) {
  reject_unknown(j, {"kind", "delta", "nu", "ell", "k", "lambda", "embed_seed", "embed_dim"}, "method");
  if (!j.contains("kind")) throw ConfigError("method.kind is required");
  MethodSpec m;
  m.kind = method_kind_from_string(read<std::string>(j, "kind", "", "method"));
  m.delta = read<double>(j, "delta", m.delta, "method");
  m.nu = read<double>(j, "nu", m.nu, "method");
  m.ell = read<int>(j, "ell", m.ell, "method");
  m.k = read<int>(j, "k", m.k, "method");
  m.lambda = read<double>(j, "lambda", m.lambda, "method");
  m.embed_seed = read<std::uint64_t>(j, "embed_seed", m.embed_seed, "method");
  m.embed_dim = read<std::size_t>(j, "embed_dim", m.embed_dim, "method");
  return m;
}

SweepSpec parse_sweep(const json& j) {
  reject_unknown(j, {"deltas", "methods", "nu", "ell", "ks", "lambdas", "embed_seed", "embed_dim",
                     "n_rounds"},
                 "sweep");
  SweepSpec s;
  s.deltas = read_list<double>(j, "deltas", {}, "sweep");
  if (!j.contains("methods") || !j.at("methods").is_array()) {
    throw ConfigError("sweep.methods must be an array of method names");
  }
  for (const json& name : j.at("methods")) {
    if (!name.is_string()) throw ConfigError("sweep.methods must hold strings");
    s.methods.push_back(method_kind_from_string(name.get<std::string>()));
  }
  s.nu = read<double>(j, "nu", s.nu, "sweep");
  s.ell = read<int>(j, "ell", s.ell, "sweep");
  s.ks = read_list<int>(j, "ks", s.ks, "sweep");
  s.lambdas = read_list<double>(j, "lambdas", s.lambdas, "sweep");
  s.embed_seed = read<std::uint64_t>(j, "embed_seed", s.embed_seed, "sweep");
  s.embed_dim = read<std::size_t>(j, "embed_dim", s.embed_dim, "sweep");
  s.n_rounds = read<std::size_t>(j, "n_rounds", s.n_rounds, "sweep");
  if (s.methods.empty()) throw ConfigError("sweep.methods must not be empty");
  if (s.deltas.empty()) throw ConfigError("sweep.deltas must not be empty");
  if (s.n_rounds < 1) throw ConfigError("sweep.n_rounds must be at least 1");
  return s;
}

VerifySpec parse_verify(const json& j) {
  reject_unknown(j, {"seeds", "vocab_size", "L", "concentration", "mc_rounds", "mc_configs",
                     "lp_rows", "dominance_negative_case"},
                 "verify");
  VerifySpec v;
  v.seeds = read<std::size_t>(j, "seeds", v.seeds, "verify");
  v.vocab_size = read<std::size_t>(j, "vocab_size", v.vocab_size, "verify");
  v.L = read<std::size_t>(j, "L", v.L, "verify");
  v.concentration = read<double>(j, "concentration", v.concentration, "verify");
  v.mc_rounds = read<std::size_t>(j, "mc_rounds", v.mc_rounds, "verify");
  v.mc_configs = read<std::size_t>(j, "mc_configs", v.mc_configs, "verify");
  v.lp_rows = read<std::size_t>(j, "lp_rows", v.lp_rows, "verify");
  v.dominance_negative_case =
      read<bool>(j, "dominance_negative_case", v.dominance_negative_case, "verify");
  if (v.seeds < 1 || v.L < 1 || v.vocab_size < 2) throw ConfigError("verify needs seeds, L >= 1, V >= 2");
  if (!(v.concentration > 0.0)) throw ConfigError("verify.concentration must be positive");
  if (v.mc_rounds < 2) throw ConfigError("verify.mc_rounds must be at least 2");
  return v;
}

}  // namespace

std::string to_string(MethodKind kind) {
  switch (kind) {
    case MethodKind::kVanilla: return "vanilla";
    case MethodKind::kUniform: return "uniform";
    case MethodKind::kCoolExp: return "cool_exp";
    case MethodKind::kCoolLinear: return "cool_linear";
    case MethodKind::kLantern: return "lantern";
    case MethodKind::kLanternGStar: return "lantern_gstar";
  }
  return "unknown";
}

MethodKind method_kind_from_string(const std::string& name) {
  for (MethodKind k : {MethodKind::kVanilla, MethodKind::kUniform, MethodKind::kCoolExp,
                       MethodKind::kCoolLinear, MethodKind::kLantern, MethodKind::kLanternGStar}) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown method '" + name + "'");
}

ExperimentConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  reject_unknown(j, {"models", "L", "method", "resampling", "n_rounds", "seed", "output_path", "sweep",
                     "verify"},
                 "config");
  ExperimentConfig cfg;
  cfg.L = read<std::size_t>(j, "L", cfg.L, "config");
  if (cfg.L < 1) throw ConfigError("L must be at least 1");
  if (!j.contains("models")) throw ConfigError("config.models is required");
  cfg.models = parse_models(j.at("models"), cfg.L);
  if (j.contains("method")) cfg.method = parse_method(j.at("method"));
  if (j.contains("resampling")) {
    std::string r = read<std::string>(j, "resampling", "", "config");
    if (r != "vanilla" && r != "gstar" && r != "lantern") {
      throw ConfigError("resampling must be one of vanilla, gstar, lantern");
    }
    cfg.resampling = r;
  }
  cfg.n_rounds = read<std::size_t>(j, "n_rounds", cfg.n_rounds, "config");
  if (cfg.n_rounds < 1) throw ConfigError("n_rounds must be at least 1");
  cfg.seed = read<std::uint64_t>(j, "seed", cfg.seed, "config");
  cfg.output_path = read<std::string>(j, "output_path", "", "config");
  if (j.contains("sweep")) cfg.sweep = parse_sweep(j.at("sweep"));
  if (j.contains("verify")) cfg.verify = parse_verify(j.at("verify"));
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::pair<ArModel, ArModel> build_models(const ExperimentConfig& cfg) {
  if (cfg.models.inline_models) return *cfg.models.inline_models;
  const RandomModelSpec& r = *cfg.models.random;
  return {random_model(r.vocab_size, r.depth, r.concentration, r.seed_p),
          random_model(r.vocab_size, r.depth, r.concentration, r.seed_q)};
}

SdConfig make_sd_config(const MethodSpec& method, const std::optional<std::string>& resampling,
                        std::size_t L, std::size_t vocab_size, std::uint64_t seed) {
  SdConfig sd;
  sd.L = L;
  sd.seed = seed;
  const int len = static_cast<int>(L);
  std::optional<LanternParams> lantern;
  try {
    switch (method.kind) {
      case MethodKind::kVanilla:
        sd.acceptance = Vanilla{};
        sd.resampling = VanillaResidual{};
        break;
      case MethodKind::kUniform:
        sd.acceptance = MultiplicativeRelax{uniform_schedule(method.delta, len)};
        sd.resampling = OptimalGStar{};
        break;
      case MethodKind::kCoolExp:
        sd.acceptance = MultiplicativeRelax{exp_schedule(method.delta, method.nu, len)};
        sd.resampling = OptimalGStar{};
        break;
      case MethodKind::kCoolLinear:
        sd.acceptance = MultiplicativeRelax{
            linear_schedule(method.delta, method.ell == 0 ? len + 1 : method.ell, len)};
        sd.resampling = OptimalGStar{};
        break;
      case MethodKind::kLantern:
      case MethodKind::kLanternGStar: {
        auto emb = std::make_shared<const TokenEmbedding>(
            TokenEmbedding::random(vocab_size, method.embed_dim, method.embed_seed));
        lantern = LanternParams{method.k, method.lambda, emb};
        sd.acceptance = LanternPP{*lantern};
        if (method.kind == MethodKind::kLantern) {
          sd.resampling = LanternResidual{*lantern};
        } else {
          sd.resampling = OptimalGStar{};
        }
        break;
      }
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(std::string("method: ") + e.what());
  }
  if (resampling) {
    if (*resampling == "vanilla") {
      sd.resampling = VanillaResidual{};
    } else if (*resampling == "gstar") {
      sd.resampling = OptimalGStar{};
    } else {
      if (!lantern) throw ConfigError("lantern resampling needs a lantern method");
      sd.resampling = LanternResidual{*lantern};
    }
  }
  return sd;
}

std::string format_double(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

// ---------------------------------------------------------------------------
// sweep

namespace {

struct SweepPoint {
  std::string label;
  double delta = 0.0;
  double aux = 0.0;
  MethodSpec method;
};

std::vector<SweepPoint> sweep_points(const ExperimentConfig& cfg) {
  const SweepSpec& s = *cfg.sweep;
  std::vector<SweepPoint> points;
  for (MethodKind kind : s.methods) {
    MethodSpec m;
    m.kind = kind;
    m.nu = s.nu;
    m.ell = s.ell;
    m.embed_seed = s.embed_seed;
    m.embed_dim = s.embed_dim;
    switch (kind) {
      case MethodKind::kVanilla:
        points.push_back({to_string(kind), 1.0, 0.0, m});
        break;
      case MethodKind::kUniform:
      case MethodKind::kCoolExp:
      case MethodKind::kCoolLinear:
        for (double d : s.deltas) {
          m.delta = d;
          double aux = 0.0;
          if (kind == MethodKind::kCoolExp) aux = s.nu;
          if (kind == MethodKind::kCoolLinear) aux = s.ell == 0 ? cfg.L + 1.0 : s.ell;
          points.push_back({to_string(kind), d, aux, m});
        }
        break;
      case MethodKind::kLantern:
      case MethodKind::kLanternGStar:
        for (int k : s.ks) {
          for (double lambda : s.lambdas) {
            m.k = k;
            m.lambda = lambda;
            points.push_back({to_string(kind) + "_k" + std::to_string(k), 1.0, lambda, m});
          }
        }
        break;
    }
  }
  std::sort(points.begin(), points.end(), [](const SweepPoint& a, const SweepPoint& b) {
    return std::tie(a.label, a.delta, a.aux) < std::tie(b.label, b.delta, b.aux);
  });
  return points;
}

template <typename Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
        next.store(n);
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

std::vector<SweepRow> run_sweep(const ExperimentConfig& cfg, const RunOptions& options) {
  if (!cfg.sweep) throw ConfigError("config has no 'sweep' section");
  const auto [p, q] = build_models(cfg);
  const std::uint64_t seed = options.seed_override.value_or(cfg.seed);
  const std::vector<SweepPoint> points = sweep_points(cfg);
  const ExactDist target = target_joint(p, cfg.L + 1);
  std::vector<SweepRow> rows(points.size());

  parallel_for(points.size(), options.threads, [&](std::size_t i) {
    const auto start = std::chrono::steady_clock::now();
    const SweepPoint& pt = points[i];
    SdConfig sd = make_sd_config(pt.method, cfg.resampling, cfg.L, p.vocab_size(), seed);
    validate_config(p, q, sd);
    RuleTables rules = compile_rules(p, q, sd.acceptance, sd.resampling, sd.L);
    SweepRow& row = rows[i];
    row.method = pt.label;
    row.delta = pt.delta;
    row.aux = pt.aux;
    row.exact_tv = tv_exact(exact_output_dist(p, q, rules), target);
    row.tvb = tvb_upper_bound(p, q, rules.acceptance, rules.resampling);
    row.expected_len = exact_expected_accepted(p, q, rules.acceptance);
    SimulationResult mc = simulate(p, q, rules, seed, cfg.sweep->n_rounds);
    row.mc_mean_len = mc.mean_accepted_len;
    row.mc_stderr = mc.stderr_accepted_len;
    row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  });
  return rows;
}

void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
  os << "method,delta,aux,exact_tv,tvb,expected_len,mc_mean_len,mc_stderr,wall_ms\n";
  for (const SweepRow& r : rows) {
    std::ostringstream wall;
    wall << std::fixed << std::setprecision(3) << r.wall_ms;
    os << r.method << ',' << format_double(r.delta) << ',' << format_double(r.aux) << ','
       << format_double(r.exact_tv) << ',' << format_double(r.tvb) << ','
       << format_double(r.expected_len) << ',' << format_double(r.mc_mean_len) << ','
       << format_double(r.mc_stderr) << ',' << wall.str() << '\n';
  }
}

// ---------------------------------------------------------------------------
// verify

namespace {

struct ModelPair {
  ArModel p;
  ArModel q;
};

ModelPair seeded_pair(std::size_t vocab, std::size_t depth, double conc, std::uint64_t base,
                      std::uint64_t index) {
  return {random_model(vocab, depth, conc, derive_seed(base, 2 * index)),
          random_model(vocab, depth, conc, derive_seed(base, 2 * index + 1))};
}

/// Draws pairs until `wanted` pass `admit` or the attempt budget runs out.
std::vector<ModelPair> admitted_pairs(std::size_t vocab, std::size_t depth, double conc,
                                      std::uint64_t base, std::size_t wanted,
                                      const std::function<bool(const ModelPair&)>& admit) {
  std::vector<ModelPair> out;
  const std::size_t budget = wanted * 20000;
  for (std::size_t i = 0; i < budget && out.size() < wanted; ++i) {
    ModelPair pair = seeded_pair(vocab, depth, conc, base, i);
    if (admit(pair)) out.push_back(std::move(pair));
  }
  return out;
}

std::vector<std::pair<std::string, Schedule>> relaxed_schedules(std::size_t L) {
  std::vector<std::pair<std::string, Schedule>> out;
  const int len = static_cast<int>(L);
  for (double d : {1.0, 1.5, 2.0, 3.0}) {
    out.emplace_back("uniform(" + format_double(d) + ")", uniform_schedule(d, len));
    out.emplace_back("cool_exp(" + format_double(d) + ",0.7)", exp_schedule(d, 0.7, len));
  }
  return out;
}

std::string fmt(double x) {
  std::ostringstream os;
  os << std::setprecision(6) << x;
  return os.str();
}

}  // namespace

std::vector<SuiteResult> run_verify_suites(const ExperimentConfig& cfg, const RunOptions& options) {
  const VerifySpec& v = cfg.verify;
  const std::uint64_t base = options.seed_override.value_or(cfg.seed);
  const std::size_t V = v.vocab_size;
  const std::size_t L = v.L;
  std::vector<ModelPair> pairs;
  for (std::size_t s = 0; s < v.seeds; ++s) pairs.push_back(seeded_pair(V, L + 1, v.concentration, base, s));

  std::vector<SuiteResult> results;
  auto add = [&](std::string name, bool ok, double margin, std::string detail) {
    results.push_back({std::move(name), ok, margin, std::move(detail)});
  };

  {  // lossless vanilla decoding
    std::vector<double> tv(pairs.size());
    parallel_for(pairs.size(), options.threads, [&](std::size_t i) {
      const auto& [p, q] = pairs[i];
      tv[i] = tv_exact(exact_output_dist(p, q, compile_rules(p, q, Vanilla{}, VanillaResidual{}, L)),
                       target_joint(p, L + 1));
    });
    const double worst = *std::max_element(tv.begin(), tv.end());
    add("lossless", worst <= 1e-12, worst, "max TV(P-hat, P) under vanilla rules");
  }

  {  // bound soundness, vanilla tightness and the two P-hat forms
    const auto schedules = relaxed_schedules(L);
    std::vector<double> slack(pairs.size()), vanilla_tvb(pairs.size()), gap(pairs.size());
    parallel_for(pairs.size(), options.threads, [&](std::size_t i) {
      const auto& [p, q] = pairs[i];
      const ExactDist target = target_joint(p, L + 1);
      std::vector<RuleTables> all;
      for (const auto& [name, sched] : schedules) {
        all.push_back(compile_rules(p, q, MultiplicativeRelax{sched}, OptimalGStar{}, L));
        all.push_back(compile_rules(p, q, MultiplicativeRelax{sched}, VanillaResidual{}, L));
      }
      if (V >= 3) {
        auto emb = std::make_shared<const TokenEmbedding>(TokenEmbedding::random(V, 4, base + i));
        LanternParams lp{2, 1.0, emb};
        all.push_back(compile_rules(p, q, LanternPP{lp}, LanternResidual{lp}, L));
        all.push_back(compile_rules(p, q, LanternPP{lp}, OptimalGStar{}, L));
      }
      RuleTables van = compile_rules(p, q, Vanilla{}, VanillaResidual{}, L);
      vanilla_tvb[i] = tvb_upper_bound(p, q, van.acceptance, van.resampling);
      all.push_back(std::move(van));
      double worst_slack = -1.0, worst_gap = 0.0;
      for (const RuleTables& rules : all) {
        worst_gap = std::max(worst_gap, exact_cross_check_gap(p, q, rules));
        const double tv = tv_exact(exact_output_dist_paths(p, q, rules), target);
        worst_slack = std::max(worst_slack, tv - tvb_upper_bound(p, q, rules.acceptance, rules.resampling));
      }
      slack[i] = worst_slack;
      gap[i] = worst_gap;
    });
    const double worst_slack = *std::max_element(slack.begin(), slack.end());
    const double worst_tvb = *std::max_element(vanilla_tvb.begin(), vanilla_tvb.end());
    const double worst_gap = *std::max_element(gap.begin(), gap.end());
    add("bound_soundness", worst_slack <= 1e-10, worst_slack, "max (exact TV - bound) over all rules");
    add("vanilla_tightness", worst_tvb <= 1e-12, worst_tvb, "max bound under vanilla rules");
    add("closed_form_agreement", worst_gap <= kCrossCheckTolerance, worst_gap,
        "max |path enumeration - closed form|");
  }

  {  // expected accepted length against Monte Carlo
    const auto schedules = relaxed_schedules(L);
    const std::size_t n = std::min(v.mc_configs, pairs.size());
    double worst_z = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& [p, q] = pairs[i];
      const Schedule& sched = schedules[i % schedules.size()].second;
      RuleTables rules = compile_rules(p, q, MultiplicativeRelax{sched}, OptimalGStar{}, L);
      const double exact = exact_expected_accepted(p, q, rules.acceptance);
      SimulationResult mc = simulate(p, q, rules, derive_seed(base, 1000 + i), v.mc_rounds,
                                     SimulateOptions{options.threads, false});
      const double z = mc.stderr_accepted_len > 0.0
                           ? std::abs(mc.mean_accepted_len - exact) / mc.stderr_accepted_len
                           : (std::abs(mc.mean_accepted_len - exact) <= 1e-12 ? 0.0 : INFINITY);
      worst_z = std::max(worst_z, z);
    }
    add("expected_length", worst_z <= 3.0, worst_z, "max |MC mean - exact| / stderr");
  }

  {  // single-row LP behind the optimal resampling rows
    constexpr double kStep = 0.005;
    double worst_excess = -INFINITY, worst_identity = 0.0;
    const std::size_t rows = std::min(v.lp_rows, pairs.size());
    const std::size_t lp_vocab = std::min<std::size_t>(V, 4);
    for (std::size_t i = 0; i < rows; ++i) {
      const ModelPair pair = seeded_pair(lp_vocab, 1, v.concentration, base + 7, i);
      auto p_row = pair.p.row_at(0, 0);
      auto q_row = pair.q.row_at(0, 0);
      const double omega = 1.0 + static_cast<double>(i % 4) * 0.5;
      const ProbRow f = relaxed_accept_row(p_row, q_row, omega);
      const ProbRow g = gstar_row(p_row, q_row, f);
      const double analytic = lp_objective(p_row, q_row, f, g);
      const LpSolution brute = brute_force_optimal_resample(p_row, q_row, f, kStep);
      worst_excess = std::max(worst_excess, analytic - brute.best_objective);
      worst_identity = std::max(worst_identity, std::abs(analytic - lp_claimed_minimum(p_row, q_row, f)));
    }
    const double slack = static_cast<double>(lp_vocab) * kStep;
    add("lp_optimality", worst_excess <= slack && worst_identity <= 1e-12, worst_excess,
        "max (analytic - grid minimum), identity gap " + fmt(worst_identity));
  }

  {  // optimal resampling equals the vanilla residual when omega >= 1
    double worst = 0.0;
    std::size_t checked = 0;
    for (const auto& [p, q] : pairs) {
      for (const auto& [name, sched] : relaxed_schedules(L)) {
        if (*std::min_element(sched.omegas.begin(), sched.omegas.end()) < 1.0) continue;
        AcceptanceTable f = AcceptanceTable::compile(p, q, MultiplicativeRelax{sched}, L);
        for (std::size_t level = 0; level < L; ++level) {
          for (std::size_t idx = 0; idx < ipow(V, level); ++idx) {
            const TokenSeq prefix = seq_from_index(idx, level, V);
            try {
              worst = std::max(worst, verify_proposition1(p, q, f, prefix));
              ++checked;
            } catch (const DegenerateResidual&) {
            }
          }
        }
      }
    }
    add("gstar_equals_vanilla", worst <= 1e-12, worst,
        "max |G* - G_van| over " + std::to_string(checked) + " prefixes");
  }

  {  // monotone response of the reduced bound in the relaxation budget
    double worst_drop = 0.0;
    for (const auto& [p, q] : pairs) {
      double prev = -INFINITY;
      for (int step = 0; step <= 12; ++step) {
        const double d = 1.0 + 0.25 * step;
        const double b = tvb_gstar_reduced(p, q, MultiplicativeRelax{uniform_schedule(d, static_cast<int>(L))}, L);
        worst_drop = std::max(worst_drop, prev - b);
        prev = b;
      }
    }
    add("bound_monotone_in_delta", worst_drop <= 1e-12, worst_drop, "max decrease of the reduced bound");
  }

  {  // annealing: relaxing early beats relaxing late at matched length
    std::size_t clamped = 0;
    std::vector<PerturbationPair> reports;
    admitted_pairs(V, 2, v.concentration, base + 11, v.seeds, [&](const ModelPair& pair) {
      if (!check_closeness(pair.p, pair.q, 0.4).close) return false;
      try {
        PerturbationPair r = perturbation_experiment(pair.p, pair.q, uniform_schedule(1.5, 2), 0.02);
        if (std::max(r.assumption1_first, r.assumption1_second) > 0.3) return false;
        reports.push_back(r);
        return true;
      } catch (const ClampViolation&) {
        ++clamped;
        return false;
      }
    });
    std::size_t wins = 0;
    for (const auto& r : reports) wins += r.mirror.tvb <= r.arm.tvb ? 1 : 0;
    const double frac = reports.empty() ? 0.0 : static_cast<double>(wins) / reports.size();
    add("annealing_perturbation", !reports.empty() && frac >= 0.9, frac,
        "relax-early arm wins on " + std::to_string(wins) + "/" + std::to_string(reports.size()) +
            " admitted models (" + std::to_string(clamped) + " skipped for clamping)");
  }

  {  // positivity of the second-position expectation under closeness
    double worst = INFINITY;
    std::size_t n = 0;
    const auto close = admitted_pairs(V, 2, v.concentration, base + 13, v.seeds, [](const ModelPair& pair) {
      return check_closeness(pair.p, pair.q, 0.4).close;
    });
    for (const auto& [p, q] : close) {
      for (double d : {1.0, 1.5, 2.0, 3.0}) {
        AcceptanceTable f = AcceptanceTable::compile(p, q, MultiplicativeRelax{uniform_schedule(d, 2)}, 2);
        worst = std::min(worst, proposition5_check(p, q, f).margin);
        ++n;
      }
    }
    add("second_position_positivity", n > 0 && worst >= 0.0, worst,
        "min E_Q[f2] - Delta - 1/5 over " + std::to_string(n) + " rules");
  }

  if (v.dominance_negative_case) {
    bool raised = false;
    const auto& [p, q] = pairs.front();
    AcceptanceTable f = AcceptanceTable::compile(p, q, MultiplicativeRelax{uniform_schedule(0.5, static_cast<int>(L))}, L);
    try {
      verify_proposition1(p, q, f, TokenSeq{});
    } catch (const DominanceViolated&) {
      raised = true;
    }
    add("dominance_negative_case", raised, raised ? 1.0 : 0.0,
        raised ? "omega = 0.5 raised DominanceViolated (expected failure)"
               : "omega = 0.5 did not raise DominanceViolated");
  }
  return results;
}

// ---------------------------------------------------------------------------
// commands

int cmd_verify(const std::string& config_path, const RunOptions& options, std::ostream& report) {
  const ExperimentConfig cfg = load_config(config_path);
  const auto start = std::chrono::steady_clock::now();
  const std::vector<SuiteResult> results = run_verify_suites(cfg, options);
  std::size_t failed = 0;
  for (const SuiteResult& r : results) {
    failed += r.passed ? 0 : 1;
    report << (r.passed ? "PASS " : "FAIL ") << std::left << std::setw(28) << r.name
           << " worst=" << fmt(r.worst_margin) << "  " << r.detail << '\n';
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  report << results.size() - failed << " passed, " << failed << " failed (" << fmt(secs) << " s)\n";
  return failed == 0 ? 0 : 1;
}

namespace {

std::string output_path(const ExperimentConfig& cfg, const RunOptions& options) {
  return options.out_override.value_or(cfg.output_path);
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  return out;
}

}  // namespace

int cmd_sweep(const std::string& config_path, const RunOptions& options, std::ostream& log) {
  const ExperimentConfig cfg = load_config(config_path);
  std::vector<SweepRow> rows;
  try {
    rows = run_sweep(cfg, options);
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  const std::string path = output_path(cfg, options);
  if (path.empty()) {
    write_sweep_csv(std::cout, rows);
  } else {
    std::ofstream out = open_output(path);
    write_sweep_csv(out, rows);
    if (!out) throw ConfigError("failed writing '" + path + "'");
  }
  std::size_t violations = 0;
  for (const SweepRow& r : rows) {
    if (r.exact_tv > r.tvb + 1e-10) {
      ++violations;
      log << "bound violated: " << r.method << " delta=" << format_double(r.delta) << '\n';
    }
  }
  log << rows.size() << " rows written" << (path.empty() ? "" : " to " + path) << '\n';
  return violations == 0 ? 0 : 1;
}

int cmd_simulate(const std::string& config_path, const RunOptions& options, std::ostream& log) {
  const ExperimentConfig cfg = load_config(config_path);
  const auto [p, q] = build_models(cfg);
  const std::uint64_t seed = options.seed_override.value_or(cfg.seed);
  SdConfig sd = make_sd_config(cfg.method, cfg.resampling, cfg.L, p.vocab_size(), seed);
  SimulationResult mc;
  double exact = 0.0;
  try {
    validate_config(p, q, sd);
    RuleTables rules = compile_rules(p, q, sd.acceptance, sd.resampling, sd.L);
    exact = exact_expected_accepted(p, q, rules.acceptance);
    mc = simulate(p, q, rules, seed, cfg.n_rounds, SimulateOptions{options.threads, true});
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }

  std::ostringstream csv;
  csv << "round,tau,bonus_used,tokens\n";
  for (std::size_t r = 0; r < mc.rounds.size(); ++r) {
    const RoundOutcome& o = mc.rounds[r];
    csv << r << ',' << o.tau << ',' << (o.bonus_used ? 1 : 0) << ',';
    for (std::size_t i = 0; i < o.tokens.size(); ++i) csv << (i ? " " : "") << o.tokens[i];
    csv << '\n';
  }
  nlohmann::ordered_json summary;
  summary["method"] = to_string(cfg.method.kind);
  summary["L"] = cfg.L;
  summary["seed"] = seed;
  summary["n_rounds"] = mc.n_rounds;
  summary["mean_accepted_len"] = mc.mean_accepted_len;
  summary["stderr"] = mc.stderr_accepted_len;
  summary["per_position_accept_rate"] = mc.per_position_accept_rate;
  summary["exact_expected_len"] = exact;

  const std::string path = output_path(cfg, options);
  if (path.empty()) {
    std::cout << csv.str();
    log << summary.dump(2) << '\n';
    return 0;
  }
  std::filesystem::path summary_path(path);
  summary_path.replace_extension(".summary.json");
  {
    std::ofstream out = open_output(path);
    out << csv.str();
  }
  {
    std::ofstream out = open_output(summary_path.string());
    out << summary.dump(2) << '\n';
  }
  log << mc.n_rounds << " rounds written to " << path << ", summary in " << summary_path.string() << '\n';
  return 0;
}

}  // namespace relaxsd
