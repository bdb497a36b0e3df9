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

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "rsd/oracle.hpp"
#include "rsd/policy.hpp"
#include "rsd/ranking.hpp"

namespace rsd {

struct VerifyResult {
  int i_star = -1;                  // -1 when position 0 already disagrees
  std::optional<int> greedy_next;   // empty iff i_star == K-1
};

VerifyResult verify(const Ranking& sigma_prev, const EncodingMatrix& s_prev);

enum class TailMode { kSampled, kGreedy };

// Keeps sigma_prev[0..i*], places the verified greedy item at i*+1 and fills
// the rest from `scores` (Gumbel sample or descending sort).
Ranking construct_next(const Ranking& sigma_prev, const EncodingMatrix& s_prev, std::span<const double> scores,
                       Rng& rng, TailMode mode);
Ranking construct_next(const Ranking& sigma_prev, const VerifyResult& v, std::span<const double> scores, Rng& rng,
                       TailMode mode);

// Scores used to order the tail of the next ranking, given the verified
// history. Returned values are logits (any monotone scale works for
// greedy tails; sampled tails treat them as Gumbel locations).
using TailScorer = std::function<std::vector<double>(const EncodingHistory&, const VerifyResult&)>;

// Rejection row S[i*+1] of the newest encoding.
TailScorer gsd_scorer();
// relevance_forward logits of the given network; params must outlive the scorer.
TailScorer policy_scorer(const PolicyParams& params);

// One constructed ranking: built from history[0..history_rounds) after the
// verification that gave i_star.
struct DecodeStep {
  int history_rounds = 0;
  int i_star = -1;
  Ranking ranking;
  std::vector<double> logits;
  double log_prob = 0.0;  // Bradley-Terry log-probability of `ranking` under `logits`
};

struct Trajectory {
  Ranking initial;                 // sigma_0, descending row 0 of the first encoding
  EncodingHistory history;         // encoded rankings fed to the scorer
  std::vector<DecodeStep> steps;   // constructed rankings sigma_1, sigma_2, ...
  std::vector<int> i_stars;        // every verification, in order
  Ranking final_ranking;
  int encodings_used = 0;
  bool early_exit = false;
  double reward = 0.0;
  double advantage = 0.0;
};

// Serving-path episode under an encoding budget of T (>= 1).
//   call 1 encodes the identity order; sigma_0 = argsort of its row 0.
//   T == 1: return sigma_0.
//   sigma_0 is encoded (call 1 is reused when sigma_0 is the identity).
//   Each round verifies the newest encoding, returns early if fully
//   consistent, otherwise constructs the next ranking, which is returned
//   without verification once the budget is spent.
Trajectory run_episode(const Oracle& oracle, const QueryContext& ctx, int budget, const TailScorer& scorer, Rng& rng,
                       TailMode mode);

Ranking run_std(const Oracle& oracle, const QueryContext& ctx);
Trajectory run_gsd(const Oracle& oracle, const QueryContext& ctx, int budget);

// Number of leading positions on which `ranking` matches `target`.
int prefix_agreement(const Ranking& ranking, const Ranking& target);

}  // namespace rsd
