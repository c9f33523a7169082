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

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace relaxsd {

using TokenId = std::uint32_t;
using TokenSeq = std::vector<TokenId>;
using TokenSpan = std::span<const TokenId>;
using ProbRow = std::vector<double>;

/// Integer power for table sizing. V and D are tiny, so overflow is not a concern
/// for the supported range (V <= 8, D <= 6).
constexpr std::size_t ipow(std::size_t base, std::size_t exp) {
  std::size_t r = 1;
  while (exp-- > 0) r *= base;
  return r;
}

/// Lexicographic (base-V, most significant first) index of a sequence.
inline std::size_t seq_index(TokenSpan seq, std::size_t vocab) {
  std::size_t idx = 0;
  for (TokenId t : seq) idx = idx * vocab + t;
  return idx;
}

inline TokenSeq seq_from_index(std::size_t idx, std::size_t len, std::size_t vocab) {
  TokenSeq seq(len);
  for (std::size_t i = len; i-- > 0;) {
    seq[i] = static_cast<TokenId>(idx % vocab);
    idx /= vocab;
  }
  return seq;
}

/// "0,2,1" style key used by the JSON formats; the empty sequence maps to "".
std::string seq_to_key(TokenSpan seq);
TokenSeq seq_from_key(const std::string& key);

}  // namespace relaxsd
