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

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "relaxsd/error.hpp"
#include "relaxsd/exact.hpp"
#include "relaxsd/experiment.hpp"
#include "relaxsd/models.hpp"
#include "relaxsd/schedules.hpp"

namespace py = pybind11;
using namespace relaxsd;

namespace {

SdConfig sd_config(const std::string& method, std::size_t L, std::size_t vocab, double delta, double nu,
                   int ell, int k, double lambda, std::uint64_t embed_seed, std::size_t embed_dim,
                   std::optional<std::string> resampling, std::uint64_t seed) {
  MethodSpec spec;
  spec.kind = method_kind_from_string(method);
  spec.delta = delta;
  spec.nu = nu;
  spec.ell = ell;
  spec.k = k;
  spec.lambda = lambda;
  spec.embed_seed = embed_seed;
  spec.embed_dim = embed_dim;
  return make_sd_config(spec, resampling, L, vocab, seed);
}

RuleTables tables(const ArModel& p, const ArModel& q, const SdConfig& cfg) {
  return compile_rules(p, q, cfg.acceptance, cfg.resampling, cfg.L);
}

py::dict sweep_row(const SweepRow& r) {
  py::dict d;
  d["method"] = r.method;
  d["delta"] = r.delta;
  d["aux"] = r.aux;
  d["exact_tv"] = r.exact_tv;
  d["tvb"] = r.tvb;
  d["expected_len"] = r.expected_len;
  d["mc_mean_len"] = r.mc_mean_len;
  d["mc_stderr"] = r.mc_stderr;
  d["wall_ms"] = r.wall_ms;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Exact and Monte Carlo analysis of relaxed speculative decoding on tabular models";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<CrossCheckFailed>(m, "CrossCheckFailed", base.ptr());

  py::class_<ArModel>(m, "ArModel")
      .def_static("from_json", &ArModel::from_json)
      .def("to_json", &ArModel::to_json)
      .def_property_readonly("vocab_size", &ArModel::vocab_size)
      .def_property_readonly("depth", &ArModel::depth)
      .def("row", [](const ArModel& a, const TokenSeq& prefix) {
        auto r = a.row(prefix);
        return std::vector<double>(r.begin(), r.end());
      }, py::arg("prefix") = TokenSeq{})
      .def("seq_prob", [](const ArModel& a, const TokenSeq& seq) { return a.seq_prob(seq); })
      .def("__eq__", [](const ArModel& a, const ArModel& b) { return a == b; });

  m.def("random_model", &random_model, py::arg("vocab_size"), py::arg("depth"), py::arg("concentration") = 1.0,
        py::arg("seed") = 0);

  m.def("uniform_schedule", [](double d, int n) { return uniform_schedule(d, n).omegas; });
  m.def("exp_schedule", [](double d, double nu, int n) { return exp_schedule(d, nu, n).omegas; });
  m.def("linear_schedule", [](double d, int ell, int n) { return linear_schedule(d, ell, n).omegas; });

  py::class_<SdConfig>(m, "SdConfig")
      .def_readonly("L", &SdConfig::L)
      .def_readwrite("seed", &SdConfig::seed);

  m.def("sd_config", &sd_config, py::arg("method"), py::arg("L"), py::arg("vocab_size"), py::arg("delta") = 1.0,
        py::arg("nu") = 0.7, py::arg("ell") = 0, py::arg("k") = 2, py::arg("lam") = 1.0,
        py::arg("embed_seed") = 0, py::arg("embed_dim") = 4, py::arg("resampling") = py::none(),
        py::arg("seed") = 0);

  m.def("target_joint", [](const ArModel& p, std::size_t length) { return target_joint(p, length).probs; });
  m.def("exact_output_dist", [](const ArModel& p, const ArModel& q, const SdConfig& cfg) {
    return exact_output_dist(p, q, cfg).probs;
  });
  m.def("exact_tv", [](const ArModel& p, const ArModel& q, const SdConfig& cfg) {
    return tv_exact(exact_output_dist(p, q, cfg), target_joint(p, cfg.L + 1));
  });
  m.def("tv_upper_bound", [](const ArModel& p, const ArModel& q, const SdConfig& cfg) {
    RuleTables t = tables(p, q, cfg);
    return tvb_upper_bound(p, q, t.acceptance, t.resampling);
  });
  m.def("expected_accepted", [](const ArModel& p, const ArModel& q, const SdConfig& cfg) {
    return exact_expected_accepted(p, q, cfg.acceptance, cfg.L);
  });
  m.def("simulate", [](const ArModel& p, const ArModel& q, const SdConfig& cfg, std::size_t n_rounds) {
    SimulationResult r;
    {
      py::gil_scoped_release release;
      r = simulate(p, q, cfg, n_rounds);
    }
    py::dict d;
    d["mean_accepted_len"] = r.mean_accepted_len;
    d["stderr"] = r.stderr_accepted_len;
    d["per_position_accept_rate"] = r.per_position_accept_rate;
    return d;
  }, py::arg("p"), py::arg("q"), py::arg("cfg"), py::arg("n_rounds"));

  m.def("run_sweep", [](const std::string& config_json, unsigned threads) {
    const ExperimentConfig cfg = parse_config(config_json);
    RunOptions options;
    options.threads = threads;
    std::vector<SweepRow> rows;
    {
      py::gil_scoped_release release;
      rows = run_sweep(cfg, options);
    }
    py::list out;
    for (const SweepRow& r : rows) out.append(sweep_row(r));
    return out;
  }, py::arg("config_json"), py::arg("threads") = 1);
}
