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

#include "rsd/decoder.hpp"

#include <algorithm>
#include <stdexcept>

#include "rsd/errors.hpp"

namespace rsd {

VerifyResult verify(const Ranking& sigma_prev, const EncodingMatrix& s_prev) {
  if (sigma_prev.size() != s_prev.size()) throw DimensionError("verify: ranking and encoding differ in size");
  const int k = sigma_prev.size();
  VerifyResult v;
  v.i_star = longest_consistent_prefix(sigma_prev, s_prev);
  if (v.i_star < k - 1) {
    const int next = v.i_star + 1;
    v.greedy_next = argmax_unplaced(s_prev.row(next), sigma_prev.order().subspan(0, static_cast<size_t>(next)));
  }
  return v;
}

Ranking construct_next(const Ranking& sigma_prev, const VerifyResult& v, std::span<const double> scores, Rng& rng,
                       TailMode mode) {
  const int k = sigma_prev.size();
  if (static_cast<int>(scores.size()) != k) throw DimensionError("construct_next: scores have wrong length");
  if (!v.greedy_next) return sigma_prev;
  std::vector<int> prefix(sigma_prev.order().begin(), sigma_prev.order().begin() + v.i_star + 1);
  prefix.push_back(*v.greedy_next);
  return mode == TailMode::kSampled ? sample_tail(scores, prefix, rng) : greedy_tail(scores, prefix);
}

Ranking construct_next(const Ranking& sigma_prev, const EncodingMatrix& s_prev, std::span<const double> scores,
                       Rng& rng, TailMode mode) {
  return construct_next(sigma_prev, verify(sigma_prev, s_prev), scores, rng, mode);
}

TailScorer gsd_scorer() {
  return [](const EncodingHistory& history, const VerifyResult& v) {
    const auto& s = history.back().encoding;
    const auto row = s.row(std::min(v.i_star + 1, s.size() - 1));
    return std::vector<double>(row.begin(), row.end());
  };
}

TailScorer policy_scorer(const PolicyParams& params) {
  return [&params](const EncodingHistory& history, const VerifyResult&) {
    return relevance_forward(params, history).logits;
  };
}

Trajectory run_episode(const Oracle& oracle, const QueryContext& ctx, int budget, const TailScorer& scorer, Rng& rng,
                       TailMode mode) {
  if (budget < 1) throw std::invalid_argument("run_episode: budget must be at least 1");
  const int k = ctx.candidate_count;
  BudgetLedger ledger(budget);
  Trajectory traj;

  const Ranking probe = Ranking::identity(k);
  const EncodingMatrix s_probe = encode_ranking(oracle, ctx, probe, ledger);
  traj.initial = Ranking(argsort_descending(s_probe.row(0)));
  if (ledger.exhausted()) {
    traj.final_ranking = traj.initial;
    traj.encodings_used = ledger.used();
    return traj;
  }
  EncodingMatrix s0 = traj.initial == probe ? s_probe : encode_ranking(oracle, ctx, traj.initial, ledger);
  traj.history.push_back({traj.initial, std::move(s0)});

  while (true) {
    const EncodedRound& last = traj.history.back();
    const VerifyResult v = verify(last.ranking, last.encoding);
    traj.i_stars.push_back(v.i_star);
    if (!v.greedy_next) {
      traj.final_ranking = last.ranking;
      traj.early_exit = true;
      break;
    }
    DecodeStep step;
    step.history_rounds = static_cast<int>(traj.history.size());
    step.i_star = v.i_star;
    step.logits = scorer(traj.history, v);
    step.ranking = construct_next(last.ranking, v, step.logits, rng, mode);
    step.log_prob = bt_log_prob(step.logits, step.ranking);
    traj.steps.push_back(step);
    if (ledger.exhausted()) {
      traj.final_ranking = step.ranking;
      break;
    }
    EncodingMatrix s = encode_ranking(oracle, ctx, step.ranking, ledger);
    traj.history.push_back({step.ranking, std::move(s)});
  }
  traj.encodings_used = ledger.used();
  return traj;
}

Ranking run_std(const Oracle& oracle, const QueryContext& ctx) {
  BudgetLedger ledger(1);
  const EncodingMatrix s = encode_ranking(oracle, ctx, Ranking::identity(ctx.candidate_count), ledger);
  return Ranking(argsort_descending(s.row(0)));
}

Trajectory run_gsd(const Oracle& oracle, const QueryContext& ctx, int budget) {
  Rng unused(0);
  return run_episode(oracle, ctx, budget, gsd_scorer(), unused, TailMode::kGreedy);
}

int prefix_agreement(const Ranking& ranking, const Ranking& target) { return ranking.common_prefix(target); }

}  // namespace rsd
