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

#include "relaxsd/schedules.hpp"

#include <cmath>

#include <json.hpp>

#include "relaxsd/error.hpp"
#include "relaxsd/numeric.hpp"

namespace relaxsd {

namespace {

void check_common(double delta, int length) {
  if (!(delta > 0.0) || !std::isfinite(delta)) throw InvalidArgument("delta must be positive");
  if (length < 1) throw InvalidArgument("schedule length must be at least 1");
}

}  // namespace

std::string to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::kUniform:
      return "uniform";
    case ScheduleKind::kExponential:
      return "exponential";
    case ScheduleKind::kLinear:
      return "linear";
  }
  return "unknown";
}

Schedule uniform_schedule(double delta, int length) {
  check_common(delta, length);
  Schedule s;
  s.kind = ScheduleKind::kUniform;
  s.delta = delta;
  s.omegas.assign(static_cast<std::size_t>(length), delta);
  return s;
}

Schedule exp_schedule(double delta, double nu, int length) {
  check_common(delta, length);
  if (!(nu >= 0.0) || !std::isfinite(nu)) throw InvalidArgument("nu must be non-negative");
  Schedule s;
  s.kind = ScheduleKind::kExponential;
  s.delta = delta;
  s.nu = nu;
  // Work with exp(-nu*(i-1)) so the largest weight is exactly 1.
  std::vector<double> w(static_cast<std::size_t>(length));
  CompensatedSum total;
  for (int i = 0; i < length; ++i) {
    w[i] = std::exp(-nu * i);
    total.add(w[i]);
  }
  const double norm = total.value();
  s.omegas.resize(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) s.omegas[i] = delta * (length * w[i] / norm);
  return s;
}

Schedule linear_schedule(double delta, int ell, int length) {
  check_common(delta, length);
  if (ell <= length) {
    throw SlopeTooSteep("linear schedule needs ell > L (ell=" + std::to_string(ell) +
                        ", L=" + std::to_string(length) + ")");
  }
  Schedule s;
  s.kind = ScheduleKind::kLinear;
  s.delta = delta;
  s.ell = ell;
  const double denom = static_cast<double>(ell) * (ell + 1.0);
  std::vector<double> w(static_cast<std::size_t>(length));
  CompensatedSum total;
  for (int i = 1; i <= length; ++i) {
    w[i - 1] = (ell - i) / denom;
    total.add(w[i - 1]);
  }
  s.omegas.resize(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) s.omegas[i] = delta * (length * w[i] / total.value());
  return s;
}

double exp_schedule_mu(double nu, int length) {
  CompensatedSum total;
  for (int i = 1; i <= length; ++i) total.add(std::exp(-nu * i));
  return std::log(total.value() / length);
}

std::string Schedule::to_json() const {
  nlohmann::ordered_json j;
  j["kind"] = to_string(kind);
  j["delta"] = delta;
  j["nu"] = nu;
  j["ell"] = ell;
  j["L"] = omegas.size();
  return j.dump();
}

Schedule Schedule::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("schedule JSON does not parse: ") + e.what());
  }
  if (!j.is_object()) throw InvalidArgument("schedule JSON must be an object");
  for (const auto& [key, _] : j.items()) {
    if (key != "kind" && key != "delta" && key != "nu" && key != "ell" && key != "L") {
      throw InvalidArgument("unknown key '" + key + "' in schedule JSON");
    }
  }
  try {
    const auto kind = j.at("kind").get<std::string>();
    const double delta = j.at("delta").get<double>();
    const int length = j.at("L").get<int>();
    if (kind == "uniform") return uniform_schedule(delta, length);
    if (kind == "exponential") return exp_schedule(delta, j.at("nu").get<double>(), length);
    if (kind == "linear") return linear_schedule(delta, j.at("ell").get<int>(), length);
    throw InvalidArgument("unknown schedule kind '" + kind + "'");
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed schedule JSON: ") + e.what());
  }
}

}  // namespace relaxsd
