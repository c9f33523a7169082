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

#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "relaxsd/error.hpp"
#include "relaxsd/schedules.hpp"

namespace relaxsd {
namespace {

double total(const Schedule& s) { return std::accumulate(s.omegas.begin(), s.omegas.end(), 0.0); }

TEST(UniformScheduleTest, ConstantSequence) {
  EXPECT_EQ(uniform_schedule(1.0, 3).omegas, (std::vector<double>{1.0, 1.0, 1.0}));
  EXPECT_EQ(uniform_schedule(2.0, 2).omegas, (std::vector<double>{2.0, 2.0}));
  EXPECT_DOUBLE_EQ(total(uniform_schedule(1.7, 5)), 1.7 * 5);
  EXPECT_THROW(uniform_schedule(0.0, 2), InvalidArgument);
  EXPECT_THROW(uniform_schedule(1.0, 0), InvalidArgument);
}

TEST(ExpScheduleTest, OperatingPoint) {
  Schedule s = exp_schedule(1.1, 0.7, 2);
  ASSERT_EQ(s.length(), 2u);
  EXPECT_NEAR(s.omega(1), 1.47001309876996543, 1e-14);
  EXPECT_NEAR(s.omega(2), 0.72998690123003457, 1e-14);
}

TEST(ExpScheduleTest, ThreePositions) {
  Schedule s = exp_schedule(2.0, 0.3, 3);
  EXPECT_NEAR(s.omegas[0], 2.62051090146474471, 1e-14);
  EXPECT_NEAR(s.omegas[1], 1.94132222330015667, 1e-14);
  EXPECT_NEAR(s.omegas[2], 1.43816687523509863, 1e-14);
}

TEST(ExpScheduleTest, ZeroDecayIsUniform) {
  for (double d : {0.5, 1.0, 1.1, 3.7}) {
    for (int L : {1, 2, 3, 7}) EXPECT_EQ(exp_schedule(d, 0.0, L).omegas, uniform_schedule(d, L).omegas);
  }
}

TEST(ExpScheduleTest, BudgetAndMonotonicity) {
  for (double nu : {0.1, 0.7, 2.0}) {
    Schedule s = exp_schedule(1.3, nu, 6);
    EXPECT_NEAR(total(s), 1.3 * 6, 1e-12);
    for (std::size_t i = 1; i < s.length(); ++i) EXPECT_GT(s.omegas[i - 1], s.omegas[i]);
  }
  EXPECT_THROW(exp_schedule(1.0, -0.1, 2), InvalidArgument);
}

TEST(ExpScheduleTest, MuSatisfiesConstraint) {
  const double mu = exp_schedule_mu(0.7, 4);
  double s = 0.0;
  for (int i = 1; i <= 4; ++i) s += std::exp(-0.7 * i - mu);
  EXPECT_NEAR(s, 4.0, 1e-12);
}

TEST(LinearScheduleTest, AppendixSlope) {
  Schedule s = linear_schedule(1.0, 8, 2);
  EXPECT_NEAR(s.omega(1), 14.0 / 13.0, 1e-15);
  EXPECT_NEAR(s.omega(2), 12.0 / 13.0, 1e-15);
}

TEST(LinearScheduleTest, FourPositions) {
  Schedule s = linear_schedule(1.5, 5, 4);
  const std::vector<double> expected{2.4, 1.8, 1.2, 0.6};
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(s.omegas[i], expected[i], 1e-14);
  EXPECT_NEAR(total(s), 6.0, 1e-12);
}

TEST(LinearScheduleTest, SlopeMustExceedLength) {
  EXPECT_THROW(linear_schedule(1.0, 2, 2), SlopeTooSteep);
  EXPECT_THROW(linear_schedule(1.0, 1, 3), SlopeTooSteep);
  EXPECT_NO_THROW(linear_schedule(1.0, 3, 2));
}

TEST(ScheduleTest, JsonRoundTrip) {
  for (const Schedule& s : {uniform_schedule(1.5, 3), exp_schedule(1.1, 0.7, 2), linear_schedule(2.0, 8, 3)}) {
    Schedule back = Schedule::from_json(s.to_json());
    EXPECT_EQ(back.kind, s.kind);
    EXPECT_EQ(back.omegas, s.omegas);
  }
  EXPECT_THROW(Schedule::from_json(R"({"kind":"uniform","delta":1,"L":2,"bogus":0})"), Error);
  EXPECT_EQ(to_string(ScheduleKind::kExponential), "exponential");
}

}  // namespace
}  // namespace relaxsd
