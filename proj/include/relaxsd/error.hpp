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

#include <stdexcept>
#include <string>

namespace relaxsd {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define RELAXSD_DEFINE_ERROR(Name)        \
  class Name : public Error {             \
   public:                                \
    using Error::Error;                   \
  }

RELAXSD_DEFINE_ERROR(InvalidArgument);
RELAXSD_DEFINE_ERROR(NormalizationError);
RELAXSD_DEFINE_ERROR(IncompleteTableError);
RELAXSD_DEFINE_ERROR(DepthExceeded);
RELAXSD_DEFINE_ERROR(VocabMismatch);
RELAXSD_DEFINE_ERROR(DegenerateResidual);
RELAXSD_DEFINE_ERROR(SlopeTooSteep);
RELAXSD_DEFINE_ERROR(DomainMismatch);
RELAXSD_DEFINE_ERROR(PremiseViolated);
RELAXSD_DEFINE_ERROR(DominanceViolated);
RELAXSD_DEFINE_ERROR(VocabTooLarge);
RELAXSD_DEFINE_ERROR(ClampViolation);
RELAXSD_DEFINE_ERROR(ExpectationMismatch);
RELAXSD_DEFINE_ERROR(CrossCheckFailed);
RELAXSD_DEFINE_ERROR(ConfigError);

#undef RELAXSD_DEFINE_ERROR

}  // namespace relaxsd
