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

#include "rsd/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "rsd/errors.hpp"

namespace rsd {

bool is_valid_encoding(const EncodingMatrix& s, const Ranking& sigma, double tol) {
  const int k = s.size();
  if (k != sigma.size()) return false;
  for (int m = 0; m < k; ++m) {
    double sum = 0.0;
    for (int j = 0; j < k; ++j) {
      const double p = s.at(m, j);
      if (!(p >= 0.0) || !std::isfinite(p)) return false;
      sum += p;
    }
    if (std::abs(sum - 1.0) > tol) return false;
    for (int p = 0; p < m; ++p) {
      if (s.at(m, sigma[p]) != 0.0) return false;
    }
  }
  return true;
}

int argmax_unplaced(std::span<const double> row, std::span<const int> placed) {
  std::vector<bool> taken(row.size(), false);
  for (int item : placed) taken[static_cast<size_t>(item)] = true;
  int best = -1;
  for (size_t j = 0; j < row.size(); ++j) {
    if (taken[j]) continue;
    if (best < 0 || row[j] > row[static_cast<size_t>(best)]) best = static_cast<int>(j);
  }
  return best;
}

int longest_consistent_prefix(const Ranking& sigma, const EncodingMatrix& s) {
  const auto order = sigma.order();
  int i_star = -1;
  for (int j = 0; j < sigma.size(); ++j) {
    if (argmax_unplaced(s.row(j), order.subspan(0, static_cast<size_t>(j))) != order[static_cast<size_t>(j)]) break;
    i_star = j;
  }
  return i_star;
}

void masked_softmax(std::span<const double> logits, std::span<const int> placed, double temperature,
                    std::span<double> out) {
  std::vector<bool> taken(logits.size(), false);
  for (int item : placed) taken[static_cast<size_t>(item)] = true;
  double max_logit = -std::numeric_limits<double>::infinity();
  for (size_t j = 0; j < logits.size(); ++j) {
    if (!taken[j]) max_logit = std::max(max_logit, logits[j] / temperature);
  }
  double total = 0.0;
  for (size_t j = 0; j < logits.size(); ++j) {
    out[j] = taken[j] ? 0.0 : std::exp(logits[j] / temperature - max_logit);
    total += out[j];
  }
  for (double& p : out) p /= total;
}

BudgetLedger::BudgetLedger(int budget) : budget_(budget) {
  if (budget < 0) throw std::invalid_argument("BudgetLedger: negative budget");
}

void BudgetLedger::require_available() const {
  if (used_ >= budget_) {
    throw BudgetExceeded("encoding budget exhausted (" + std::to_string(used_) + "/" +
                         std::to_string(budget_) + ")");
  }
}

void BudgetLedger::charge() {
  require_available();
  ++used_;
}

Ranking Oracle::target_ranking(const QueryContext& ctx) const {
  const int k = ctx.candidate_count;
  std::vector<int> order(static_cast<size_t>(k));
  for (int i = 0; i < k; ++i) order[static_cast<size_t>(i)] = i;
  int fixed = 0;  // order[:fixed] is greedy-consistent
  while (fixed < k) {
    const Ranking current(order);
    const EncodingMatrix s = encode(ctx, current);
    // Accept every position that already matches the greedy choice.
    while (fixed < k) {
      const int next = argmax_unplaced(s.row(fixed), std::span<const int>(order.data(), static_cast<size_t>(fixed)));
      if (next == order[static_cast<size_t>(fixed)]) {
        ++fixed;
        continue;
      }
      // Move the greedy item into place; the remainder keeps the order of
      // the current rejection row so the next encoding is a good guess.
      std::vector<int> rest;
      for (int p = fixed; p < k; ++p) {
        if (order[static_cast<size_t>(p)] != next) rest.push_back(order[static_cast<size_t>(p)]);
      }
      const auto row = s.row(fixed);
      std::stable_sort(rest.begin(), rest.end(),
                       [&](int a, int b) { return row[static_cast<size_t>(a)] > row[static_cast<size_t>(b)]; });
      order[static_cast<size_t>(fixed)] = next;
      std::copy(rest.begin(), rest.end(), order.begin() + fixed + 1);
      ++fixed;
      break;
    }
  }
  return Ranking(std::move(order));
}

EncodingMatrix encode_ranking(const Oracle& oracle, const QueryContext& ctx, const Ranking& sigma,
                              BudgetLedger& ledger) {
  ledger.require_available();
  if (sigma.size() != ctx.candidate_count) {
    throw DimensionError("encode_ranking: ranking has " + std::to_string(sigma.size()) +
                         " items, query expects " + std::to_string(ctx.candidate_count));
  }
  EncodingMatrix s = oracle.encode(ctx, sigma);
  ledger.charge();
  return s;
}

std::vector<double> first_token_distribution(const Oracle& oracle, const QueryContext& ctx) {
  const EncodingMatrix s = oracle.encode(ctx, Ranking::identity(ctx.candidate_count));
  const auto row = s.row(0);
  return {row.begin(), row.end()};
}

}  // namespace rsd
