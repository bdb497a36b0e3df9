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
#include <initializer_list>
#include <span>
#include <vector>

namespace rsd {

// A strict total order over K candidates. order()[p] is the item placed at
// 0-based rank position p. Construction validates the bijection.
class Ranking {
 public:
  Ranking() = default;
  explicit Ranking(std::vector<int> order);
  Ranking(std::initializer_list<int> order);

  static Ranking identity(int k);
  static Ranking reversed(int k);

  int size() const { return static_cast<int>(order_.size()); }
  int operator[](int position) const { return order_[static_cast<size_t>(position)]; }
  std::span<const int> order() const { return order_; }

  // rank_of()[item] = 1-based position of item.
  std::vector<int> rank_of() const;

  // Number of leading positions on which *this and other agree.
  int common_prefix(const Ranking& other) const;

  friend bool operator==(const Ranking&, const Ranking&) = default;

 private:
  std::vector<int> order_;
};

// True iff order is a permutation of {0, ..., order.size()-1} with size >= 2.
bool is_permutation_of_range(std::span<const int> order);

// Items sorted by descending score; ties broken by ascending item index.
std::vector<int> argsort_descending(std::span<const double> scores);

struct MetricReport {
  double kt = 0.0;
  double sr = 0.0;
  std::int64_t fd = 0;
  std::int64_t kd = 0;
};

double kendall_tau(const Ranking& a, const Ranking& b);
double spearman_rho(const Ranking& a, const Ranking& b);
std::int64_t footrule(const Ranking& a, const Ranking& b);
std::int64_t kemeny(const Ranking& a, const Ranking& b);

MetricReport compare_rankings(const Ranking& predicted, const Ranking& target);

// Episode return: Spearman correlation between the final ranking and the
// target. Higher is better.
double episode_reward(const Ranking& predicted, const Ranking& target);

}  // namespace rsd
