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

#include "rsd/ranking.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "rsd/errors.hpp"

namespace rsd {

bool is_permutation_of_range(std::span<const int> order) {
  const auto k = order.size();
  if (k < 2) return false;
  std::vector<bool> seen(k, false);
  for (int item : order) {
    if (item < 0 || static_cast<size_t>(item) >= k || seen[static_cast<size_t>(item)]) return false;
    seen[static_cast<size_t>(item)] = true;
  }
  return true;
}

Ranking::Ranking(std::vector<int> order) : order_(std::move(order)) {
  if (!is_permutation_of_range(order_)) {
    throw std::invalid_argument("Ranking: order must be a permutation of 0..K-1 with K >= 2 (got size " +
                                std::to_string(order_.size()) + ")");
  }
}

Ranking::Ranking(std::initializer_list<int> order) : Ranking(std::vector<int>(order)) {}

Ranking Ranking::identity(int k) {
  std::vector<int> order(static_cast<size_t>(k));
  std::iota(order.begin(), order.end(), 0);
  return Ranking(std::move(order));
}

Ranking Ranking::reversed(int k) {
  std::vector<int> order(static_cast<size_t>(k));
  std::iota(order.rbegin(), order.rend(), 0);
  return Ranking(std::move(order));
}

std::vector<int> Ranking::rank_of() const {
  std::vector<int> ranks(order_.size());
  for (size_t p = 0; p < order_.size(); ++p) ranks[static_cast<size_t>(order_[p])] = static_cast<int>(p) + 1;
  return ranks;
}

int Ranking::common_prefix(const Ranking& other) const {
  const int n = std::min(size(), other.size());
  int p = 0;
  while (p < n && order_[static_cast<size_t>(p)] == other.order_[static_cast<size_t>(p)]) ++p;
  return p;
}

std::vector<int> argsort_descending(std::span<const double> scores) {
  std::vector<int> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    return scores[static_cast<size_t>(a)] > scores[static_cast<size_t>(b)];
  });
  return idx;
}

namespace {

void check_same_size(const Ranking& a, const Ranking& b) {
  if (a.size() != b.size()) {
    throw DimensionError("ranking size mismatch: " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
  }
}

}  // namespace

std::int64_t kemeny(const Ranking& a, const Ranking& b) {
  check_same_size(a, b);
  const auto ra = a.rank_of();
  const auto rb = b.rank_of();
  std::int64_t discordant = 0;
  const size_t k = ra.size();
  for (size_t i = 0; i < k; ++i) {
    for (size_t j = i + 1; j < k; ++j) {
      if ((ra[i] < ra[j]) != (rb[i] < rb[j])) ++discordant;
    }
  }
  return discordant;
}

double kendall_tau(const Ranking& a, const Ranking& b) {
  // Full permutations have no ties, so C + D = K(K-1)/2.
  const std::int64_t k = a.size();
  const std::int64_t pairs = k * (k - 1) / 2;
  const std::int64_t d = kemeny(a, b);
  return static_cast<double>(pairs - 2 * d) / static_cast<double>(pairs);
}

double spearman_rho(const Ranking& a, const Ranking& b) {
  check_same_size(a, b);
  const auto ra = a.rank_of();
  const auto rb = b.rank_of();
  std::int64_t sum_sq = 0;
  for (size_t i = 0; i < ra.size(); ++i) {
    const std::int64_t d = ra[i] - rb[i];
    sum_sq += d * d;
  }
  const auto k = static_cast<std::int64_t>(ra.size());
  return 1.0 - static_cast<double>(6 * sum_sq) / static_cast<double>(k * (k * k - 1));
}

std::int64_t footrule(const Ranking& a, const Ranking& b) {
  check_same_size(a, b);
  const auto ra = a.rank_of();
  const auto rb = b.rank_of();
  std::int64_t total = 0;
  for (size_t i = 0; i < ra.size(); ++i) total += std::abs(ra[i] - rb[i]);
  return total;
}

MetricReport compare_rankings(const Ranking& predicted, const Ranking& target) {
  return MetricReport{kendall_tau(predicted, target), spearman_rho(predicted, target),
                      footrule(predicted, target), kemeny(predicted, target)};
}

double episode_reward(const Ranking& predicted, const Ranking& target) {
  return spearman_rho(predicted, target);
}

}  // namespace rsd
