// Copyright 2026 The RSD Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rsd/ranking.hpp"

namespace rsd {

struct QueryContext {
  std::string query_id;
  int candidate_count = 0;
  std::uint64_t seed = 0;
};

// K x K next-item probabilities produced by one encoding of a ranking.
// Row m is the distribution over candidates given the prefix sigma[:m];
// columns are in canonical candidate order.
class EncodingMatrix {
 public:
  EncodingMatrix() = default;
  explicit EncodingMatrix(int k) : k_(k), probs_(static_cast<size_t>(k) * static_cast<size_t>(k), 0.0) {}

  int size() const { return k_; }
  double& at(int row, int col) { return probs_[index(row, col)]; }
  double at(int row, int col) const { return probs_[index(row, col)]; }

  std::span<double> row(int m) { return {probs_.data() + index(m, 0), static_cast<size_t>(k_)}; }
  std::span<const double> row(int m) const { return {probs_.data() + index(m, 0), static_cast<size_t>(k_)}; }
  std::span<const double> data() const { return probs_; }

  friend bool operator==(const EncodingMatrix&, const EncodingMatrix&) = default;

 private:
  size_t index(int row, int col) const {
    return static_cast<size_t>(row) * static_cast<size_t>(k_) + static_cast<size_t>(col);
  }

  int k_ = 0;
  std::vector<double> probs_;
};

// Checks row-stochasticity (within tol) and the no-repeat zeroing of items
// already placed by sigma's prefix.
bool is_valid_encoding(const EncodingMatrix& s, const Ranking& sigma, double tol = 1e-9);

// Argmax of row over items not yet placed; lowest index wins ties.
int argmax_unplaced(std::span<const double> row, std::span<const int> placed);

// Largest i such that every sigma[j], j <= i, equals the greedy choice of
// row j among items not in sigma[:j]; -1 when position 0 already disagrees.
int longest_consistent_prefix(const Ranking& sigma, const EncodingMatrix& s);

// Softmax of logits / temperature restricted to items not in `placed`;
// placed items receive exactly zero.
void masked_softmax(std::span<const double> logits, std::span<const int> placed, double temperature,
                    std::span<double> out);

// Counts serving-time encodings of one episode.
class BudgetLedger {
 public:
  explicit BudgetLedger(int budget);

  int budget() const { return budget_; }
  int used() const { return used_; }
  int remaining() const { return budget_ - used_; }
  bool exhausted() const { return used_ >= budget_; }

  // Throws BudgetExceeded if no encoding is left. Does not consume.
  void require_available() const;
  // Consumes one encoding; throws BudgetExceeded if none is left.
  void charge();

 private:
  int budget_;
  int used_ = 0;
};

// The target ranker. Implementations are immutable after construction and
// safe to call concurrently.
class Oracle {
 public:
  virtual ~Oracle() = default;

  // One unbudgeted forward pass over sigma.
  virtual EncodingMatrix encode(const QueryContext& ctx, const Ranking& sigma) const = 0;

  // Greedy autoregressive ranking of the oracle. The default walks the
  // oracle with repeated encodings, accepting every greedy-consistent
  // position of each encoded ranking; it spends no serving budget.
  virtual Ranking target_ranking(const QueryContext& ctx) const;
};

// Budgeted encoding: checks the ledger before any oracle work and charges it
// only after the oracle succeeded.
EncodingMatrix encode_ranking(const Oracle& oracle, const QueryContext& ctx, const Ranking& sigma,
                              BudgetLedger& ledger);

// Prefix-length-0 next-item distribution (row 0 of any encoding).
std::vector<double> first_token_distribution(const Oracle& oracle, const QueryContext& ctx);

}  // namespace rsd
