# Copyright 2026 The relaxsd Authors.
# SPDX-License-Identifier: Apache-2.0
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Relaxed speculative decoding on tabular autoregressive models."""

from ._core import (
    ArModel,
    ConfigError,
    CrossCheckFailed,
    Error,
    SdConfig,
    exact_output_dist,
    exact_tv,
    exp_schedule,
    expected_accepted,
    linear_schedule,
    random_model,
    run_sweep,
    sd_config,
    simulate,
    target_joint,
    tv_upper_bound,
    uniform_schedule,
)

__all__ = [
    "ArModel",
    "ConfigError",
    "CrossCheckFailed",
    "Error",
    "SdConfig",
    "exact_output_dist",
    "exact_tv",
    "exp_schedule",
    "expected_accepted",
    "linear_schedule",
    "random_model",
    "run_sweep",
    "sd_config",
    "simulate",
    "target_joint",
    "tv_upper_bound",
    "uniform_schedule",
]
