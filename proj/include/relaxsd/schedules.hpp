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

#include <string>
#include <vector>

namespace relaxsd {

enum class ScheduleKind { kUniform, kExponential, kLinear };

std::string to_string(ScheduleKind kind);

/// Relaxation parameters omega_1..omega_L of the multiplicative acceptance rule,
/// together with the parameters that generated them.
struct Schedule {
  ScheduleKind kind = ScheduleKind::kUniform;
  double delta = 1.0;
  double nu = 0.0;  // exponential only
  int ell = 0;      // linear only
  std::vector<double> omegas;

  std::size_t length() const { return omegas.size(); }
  /// omega for 1-based draft position i.
  double omega(std::size_t position) const { return omegas.at(position - 1); }

  /// {"kind": ..., "delta": ..., "nu": ..., "ell": ..., "L": ...}
  std::string to_json() const;
  /// Rebuilds the schedule from its parameters; unknown keys are rejected.
  static Schedule from_json(const std::string& text);
};

/// omega_i = delta for every position.
Schedule uniform_schedule(double delta, int length);

/// omega_i = delta * exp(-nu*i - mu) with mu fixed by sum_i exp(-nu*i - mu) = L,
/// i.e. omega_i = delta * L * exp(-nu*i) / sum_j exp(-nu*j).
Schedule exp_schedule(double delta, double nu, int length);

/// omega_i = delta * L * w_i / sum_j w_j with w_i = (ell - i) / (ell * (ell + 1)).
/// Throws SlopeTooSteep unless ell > L.
Schedule linear_schedule(double delta, int ell, int length);

/// The normalizer mu of the exponential schedule, reconstructed as
/// ln(sum_i exp(-nu*i) / L).
double exp_schedule_mu(double nu, int length);

}  // namespace relaxsd
