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

#include "relaxsd/models.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include <json.hpp>

#include "relaxsd/error.hpp"
#include "relaxsd/numeric.hpp"

namespace relaxsd {

std::string seq_to_key(TokenSpan seq) {
  std::string key;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (i > 0) key += ',';
    key += std::to_string(seq[i]);
  }
  return key;
}

TokenSeq seq_from_key(const std::string& key) {
  TokenSeq seq;
  if (key.empty()) return seq;
  std::stringstream ss(key);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty() || item.find_first_not_of("0123456789") != std::string::npos) {
      throw InvalidArgument("malformed sequence key '" + key + "'");
    }
    seq.push_back(static_cast<TokenId>(std::stoul(item)));
  }
  return seq;
}

std::uint32_t sample_index(std::span<const double> row, Rng& rng) {
  const double u = rng.uniform();
  double cum = 0.0;
  std::uint32_t last_positive = 0;
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (row[i] <= 0.0) continue;
    last_positive = static_cast<std::uint32_t>(i);
    cum += row[i];
    if (u < cum) return last_positive;
  }
  return last_positive;
}

namespace {

void check_and_normalize(std::span<double> row, const std::string& where) {
  CompensatedSum s;
  for (double p : row) {
    if (!(p >= 0.0) || !std::isfinite(p)) {
      throw NormalizationError("negative or non-finite probability in row " + where);
    }
    s.add(p);
  }
  const double total = s.value();
  if (std::abs(total - 1.0) > kConstructionTolerance) {
    std::ostringstream os;
    os.precision(17);
    os << "row " << where << " sums to " << total;
    throw NormalizationError(os.str());
  }
  for (double& p : row) p /= total;
}

}  // namespace

ArModel::ArModel(std::size_t vocab, std::size_t depth, std::vector<double> probs)
    : vocab_(vocab), depth_(depth), probs_(std::move(probs)) {}

std::size_t ArModel::level_offset(std::size_t level) const {
  // Sum_{l < level} V^l rows, V entries each.
  std::size_t rows = 0;
  for (std::size_t l = 0; l < level; ++l) rows += ipow(vocab_, l);
  return rows * vocab_;
}

ArModel ArModel::from_tables(std::size_t vocab_size, std::size_t depth, const TableMap& tables) {
  if (vocab_size == 0 || depth == 0) {
    throw InvalidArgument("vocab_size and depth must be positive");
  }
  std::vector<std::vector<ProbRow>> levels(depth);
  for (std::size_t level = 0; level < depth; ++level) {
    const std::size_t n = ipow(vocab_size, level);
    levels[level].reserve(n);
    for (std::size_t idx = 0; idx < n; ++idx) {
      TokenSeq prefix = seq_from_index(idx, level, vocab_size);
      auto it = tables.find(prefix);
      if (it == tables.end()) {
        throw IncompleteTableError("missing conditional for prefix (" + seq_to_key(prefix) + ")");
      }
      levels[level].push_back(it->second);
    }
  }
  for (const auto& [prefix, row] : tables) {
    if (prefix.size() >= depth) {
      throw InvalidArgument("prefix (" + seq_to_key(prefix) + ") is too long for depth " +
                            std::to_string(depth));
    }
    for (TokenId t : prefix) {
      if (t >= vocab_size) {
        throw InvalidArgument("token " + std::to_string(t) + " outside vocabulary");
      }
    }
  }
  return from_levels(vocab_size, std::move(levels));
}

ArModel ArModel::from_levels(std::size_t vocab_size, std::vector<std::vector<ProbRow>> levels) {
  if (vocab_size == 0 || levels.empty()) {
    throw InvalidArgument("vocab_size and depth must be positive");
  }
  std::vector<double> probs;
  for (std::size_t level = 0; level < levels.size(); ++level) {
    const std::size_t n = ipow(vocab_size, level);
    if (levels[level].size() != n) {
      throw IncompleteTableError("level " + std::to_string(level) + " has " +
                                 std::to_string(levels[level].size()) + " rows, expected " +
                                 std::to_string(n));
    }
    for (std::size_t idx = 0; idx < n; ++idx) {
      ProbRow& row = levels[level][idx];
      const std::string where = "(" + seq_to_key(seq_from_index(idx, level, vocab_size)) + ")";
      if (row.size() != vocab_size) {
        throw NormalizationError("row " + where + " has length " + std::to_string(row.size()) +
                                 ", expected " + std::to_string(vocab_size));
      }
      check_and_normalize(row, where);
      probs.insert(probs.end(), row.begin(), row.end());
    }
  }
  return ArModel(vocab_size, levels.size(), std::move(probs));
}

std::span<const double> ArModel::row_at(std::size_t level, std::size_t prefix_index) const {
  if (level >= depth_) {
    throw DepthExceeded("prefix length " + std::to_string(level) + " >= depth " +
                        std::to_string(depth_));
  }
  const std::size_t off = level_offset(level) + prefix_index * vocab_;
  return std::span<const double>(probs_).subspan(off, vocab_);
}

std::span<const double> ArModel::row(TokenSpan prefix) const {
  for (TokenId t : prefix) {
    if (t >= vocab_) throw InvalidArgument("token " + std::to_string(t) + " outside vocabulary");
  }
  return row_at(prefix.size(), seq_index(prefix, vocab_));
}

double ArModel::cond_prob(TokenSpan prefix, TokenId token) const {
  if (token >= vocab_) throw InvalidArgument("token " + std::to_string(token) + " outside vocabulary");
  return row(prefix)[token];
}

double ArModel::seq_prob(TokenSpan seq) const {
  if (seq.size() > depth_) {
    throw DepthExceeded("sequence length " + std::to_string(seq.size()) + " > depth " +
                        std::to_string(depth_));
  }
  double p = 1.0;
  for (std::size_t i = 0; i < seq.size(); ++i) p *= cond_prob(seq.first(i), seq[i]);
  return p;
}

ArModel ArModel::rerooted(TokenSpan prefix) const {
  if (prefix.size() >= depth_) {
    throw DepthExceeded("cannot reroot at a prefix of length " + std::to_string(prefix.size()) +
                        " in a depth-" + std::to_string(depth_) + " model");
  }
  const std::size_t new_depth = depth_ - prefix.size();
  std::vector<double> probs;
  TokenSeq full(prefix.begin(), prefix.end());
  for (std::size_t level = 0; level < new_depth; ++level) {
    const std::size_t n = ipow(vocab_, level);
    for (std::size_t idx = 0; idx < n; ++idx) {
      TokenSeq tail = seq_from_index(idx, level, vocab_);
      full.resize(prefix.size());
      full.insert(full.end(), tail.begin(), tail.end());
      auto r = row(full);
      probs.insert(probs.end(), r.begin(), r.end());
    }
  }
  return ArModel(vocab_, new_depth, std::move(probs));
}

std::string ArModel::to_json() const {
  nlohmann::ordered_json j;
  j["vocab_size"] = vocab_;
  j["depth"] = depth_;
  nlohmann::ordered_json tables = nlohmann::ordered_json::object();
  for (std::size_t level = 0; level < depth_; ++level) {
    const std::size_t n = ipow(vocab_, level);
    for (std::size_t idx = 0; idx < n; ++idx) {
      auto r = row_at(level, idx);
      tables[seq_to_key(seq_from_index(idx, level, vocab_))] = std::vector<double>(r.begin(), r.end());
    }
  }
  j["tables"] = std::move(tables);
  return j.dump(2);
}

ArModel ArModel::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("model JSON does not parse: ") + e.what());
  }
  try {
    for (const auto& [key, _] : j.items()) {
      if (key != "vocab_size" && key != "depth" && key != "tables") {
        throw InvalidArgument("unknown key '" + key + "' in model JSON");
      }
    }
    const auto vocab = j.at("vocab_size").get<std::size_t>();
    const auto depth = j.at("depth").get<std::size_t>();
    TableMap tables;
    for (const auto& [key, value] : j.at("tables").items()) {
      tables[seq_from_key(key)] = value.get<ProbRow>();
    }
    return from_tables(vocab, depth, tables);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("malformed model JSON: ") + e.what());
  }
}

ArModel random_model(std::size_t vocab_size, std::size_t depth, double concentration,
                     std::uint64_t seed) {
  if (!(concentration > 0.0) || !std::isfinite(concentration)) {
    throw InvalidArgument("concentration must be positive");
  }
  if (vocab_size == 0 || depth == 0) throw InvalidArgument("vocab_size and depth must be positive");
  Rng rng(seed);
  std::gamma_distribution<double> gamma(concentration, 1.0);
  std::vector<std::vector<ProbRow>> levels(depth);
  for (std::size_t level = 0; level < depth; ++level) {
    const std::size_t n = ipow(vocab_size, level);
    for (std::size_t idx = 0; idx < n; ++idx) {
      ProbRow row(vocab_size);
      double total = 0.0;
      // Tiny concentrations can underflow every draw; redraw rather than divide by 0.
      do {
        total = 0.0;
        for (double& x : row) {
          x = gamma(rng.engine());
          total += x;
        }
      } while (!(total > 0.0));
      for (double& x : row) x /= total;
      levels[level].push_back(std::move(row));
    }
  }
  return ArModel::from_levels(vocab_size, std::move(levels));
}

double tv_conditional(const ArModel& p, const ArModel& q, TokenSpan prefix) {
  if (p.vocab_size() != q.vocab_size()) {
    throw VocabMismatch("vocab sizes differ: " + std::to_string(p.vocab_size()) + " vs " +
                        std::to_string(q.vocab_size()));
  }
  return half_l1(p.row(prefix), q.row(prefix));
}

ClosenessReport check_closeness(const ArModel& p, const ArModel& q, double threshold) {
  if (p.vocab_size() != q.vocab_size()) throw VocabMismatch("vocab sizes differ");
  const std::size_t depth = std::min(p.depth(), q.depth());
  ClosenessReport report;
  report.worst_tv = -1.0;
  for (std::size_t level = 0; level < depth; ++level) {
    const std::size_t n = ipow(p.vocab_size(), level);
    for (std::size_t idx = 0; idx < n; ++idx) {
      const double tv = half_l1(p.row_at(level, idx), q.row_at(level, idx));
      if (tv > report.worst_tv) {
        report.worst_tv = tv;
        report.worst_prefix = seq_from_index(idx, level, p.vocab_size());
      }
    }
  }
  report.close = report.worst_tv <= threshold;
  return report;
}

TokenId sample_next(const ArModel& model, TokenSpan prefix, Rng& rng) {
  return sample_index(model.row(prefix), rng);
}

TokenEmbedding::TokenEmbedding(std::size_t dim, std::vector<std::vector<double>> vectors)
    : dim_(dim), vectors_(std::move(vectors)) {
  if (dim_ == 0) throw InvalidArgument("embedding dimension must be positive");
  for (const auto& v : vectors_) {
    if (v.size() != dim_) throw InvalidArgument("embedding vector has wrong dimension");
    for (double x : v) {
      if (!std::isfinite(x)) throw InvalidArgument("embedding coordinate is not finite");
    }
  }
}

TokenEmbedding TokenEmbedding::random(std::size_t vocab_size, std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<double>> vectors(vocab_size, std::vector<double>(dim));
  for (auto& v : vectors) {
    for (double& x : v) x = normal(rng.engine());
  }
  return TokenEmbedding(dim, std::move(vectors));
}

double TokenEmbedding::distance(TokenId a, TokenId b) const {
  const auto& va = vectors_.at(a);
  const auto& vb = vectors_.at(b);
  double s = 0.0;
  for (std::size_t i = 0; i < dim_; ++i) s += (va[i] - vb[i]) * (va[i] - vb[i]);
  return std::sqrt(s);
}

}  // namespace relaxsd
