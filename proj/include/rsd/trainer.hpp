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
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "rsd/decoder.hpp"
#include "rsd/optimizer.hpp"
#include "rsd/oracle.hpp"
#include "rsd/policy.hpp"

namespace rsd {

enum class AdvantageMode { kReference, kGroup };

// Where Stage I draws its supervised states from.
//   kInitial: one state per query, the initial history, full-ranking loss.
//   kDecoder: every state visited by greedy speculative decoding, with the
//             loss restricted to the items the tail constructor reorders.
enum class Stage1States { kInitial, kDecoder };

// Log-probability of a constructed ranking in the Stage-II objective.
//   kBradleyTerry: pairwise product over the whole ranking.
//   kPlackettLuceTail: the sampler's own law over the sampled positions
//                      (after the verified prefix and the greedy item).
enum class StepLogProb { kBradleyTerry, kPlackettLuceTail };

struct TrainConfig {
  int budget = 5;
  int group_size = 8;
  double beta_kl = 0.1;
  int batch_queries = 16;
  AdamConfig adam;  // lr 5e-5
  int stage1_steps = 200;
  int stage2_iters = 100;
  AdvantageMode advantage_mode = AdvantageMode::kReference;
  Stage1States stage1_states = Stage1States::kInitial;
  StepLogProb step_log_prob = StepLogProb::kBradleyTerry;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainingQuery {
  QueryContext ctx;
  Ranking target;
};

// [ (sigma_init, S_init) ]: sigma_init sorts row 0 of the prompt-only
// distribution, S_init is its (unbudgeted) encoding.
EncodingHistory initial_history(const Oracle& oracle, const QueryContext& ctx);

// A history, the target it is supervised towards and the items whose
// positions are already fixed (excluded from the loss).
struct SupervisedState {
  EncodingHistory history;
  Ranking target;
  std::vector<int> fixed;
};

// -log pi(target | history) under the Bradley-Terry model of the policy
// logits, over the pairs of non-fixed items; adds the gradient of the loss
// into `grad` when given.
double supervised_loss(const PolicyParams& params, const EncodingHistory& history, const Ranking& target,
                       PolicyGradient* grad = nullptr, std::span<const int> fixed = {});

// States visited by a greedy speculative episode with budget T: for every
// constructed ranking, the history it was built from and its fixed prefix
// (i* + 1 verified items and the greedy next item). States whose tail has
// fewer than two items are dropped.
std::vector<SupervisedState> decoder_states(const Oracle& oracle, const TrainingQuery& query, int budget);

// One Adam step on a single query. Returns the loss before the step.
double stage1_step(PolicyParams& params, const TrainingQuery& query, const Oracle& oracle, Adam& optimizer);

// One Adam step on the mean loss of several states.
double stage1_batch_step(PolicyParams& params, std::span<const SupervisedState> states, Adam& optimizer);

// group: A_i = R_i - mean of the other returns (needs >= 2 returns).
// reference: A_i = R_i - r_ref.
std::vector<double> compute_advantages(std::span<const double> returns, double r_ref, AdvantageMode mode);

struct ReferenceResult {
  Ranking ranking;
  double reward = 0.0;
  Trajectory trajectory;
};

// Greedy-tail episode under a frozen snapshot. Deterministic.
ReferenceResult reference_rollout(const PolicyParams& snapshot, const QueryContext& ctx, const Ranking& target,
                                  const Oracle& oracle, int budget);

// Sampled-tail training episode; reward is filled in.
Trajectory training_rollout(const PolicyParams& params, const QueryContext& ctx, const Ranking& target,
                            const Oracle& oracle, int budget, Rng& rng);

// Mean over trajectories of
//   (1/n) sum_t [ A * log pi_theta(sigma_t | s_<t) - beta * KL(h_theta || h_ref) ]
// with every state re-scored under params and ref. Trajectories without
// constructed rankings contribute zero. Adds dJ/dtheta into grad when given.
struct RpoObjective {
  double objective = 0.0;
  double mean_kl = 0.0;
};
RpoObjective rpo_objective(const PolicyParams& params, const PolicyParams& ref, std::span<const Trajectory> trajectories,
                           double beta_kl, PolicyGradient* grad = nullptr,
                           StepLogProb log_prob = StepLogProb::kBradleyTerry);

struct UpdateStats {
  int iter = 0;
  double mean_return = 0.0;
  double mean_advantage = 0.0;
  double mean_reference_return = 0.0;
  double kl = 0.0;
  double grad_norm = 0.0;
  bool applied = false;
};

// G sampled episodes and one greedy reference rollout per query, then one
// Adam ascent step on the RPO objective. Non-finite gradients skip the step.
UpdateStats rpo_update(PolicyParams& params, const PolicyParams& ref, std::span<const TrainingQuery> batch,
                       const Oracle& oracle, const TrainConfig& cfg, Adam& optimizer, Rng& rng);

using ProgressLog = std::function<void(const std::string& json_line)>;

// Runs the configured number of Stage-I steps over minibatches drawn from
// `queries`; returns the per-step losses.
std::vector<double> train_stage1(PolicyParams& params, std::span<const TrainingQuery> queries, const Oracle& oracle,
                                 const TrainConfig& cfg, const ProgressLog& log = {});

// Stage II: per outer iteration, snapshot the reference, draw a batch and
// apply rpo_update.
std::vector<UpdateStats> train_stage2(PolicyParams& params, std::span<const TrainingQuery> queries,
                                      const Oracle& oracle, const TrainConfig& cfg, const ProgressLog& log = {});

// Compares grad[(pi/pi_old) * A] with grad[A * log pi] at theta = theta_old
// for every constructed step of the trajectory; also the PPO-clipped
// surrogate. Returns the largest relative coordinate error.
struct IdentityReport {
  double max_rel_err = 0.0;
  double max_rel_err_clipped = 0.0;
  double max_abs_grad = 0.0;
};
IdentityReport grpo_identity_check(const PolicyParams& params, const Trajectory& trajectory, double advantage,
                                   double clip_eps = 0.2);

struct VarianceExpConfig {
  double sigma_b = 1.0;
  double sigma_w = 1.0;
  double sigma_delta = 0.0;
  int group_size = 5;
  long n_samples = 1'000'000;
  std::uint64_t seed = 0;
};

struct VarianceReport {
  double var_ref = 0.0;
  double var_group = 0.0;
  double theory_ref = 0.0;
  double theory_group = 0.0;
};

// Draws R_i = mu + eps_i and R_ref = mu + delta with mu ~ N(0, sigma_b^2),
// eps_i ~ N(0, sigma_w^2), delta ~ N(0, sigma_delta^2).
VarianceReport variance_experiment(const VarianceExpConfig& cfg);

struct UnbiasednessReport {
  std::vector<double> grad_no_baseline;
  std::vector<double> grad_group_baseline;
  std::vector<double> grad_reference_baseline;
  std::vector<double> grad_greedy_reference;
  double max_baseline_gap = 0.0;       // largest coordinate gap to the no-baseline gradient
  double max_score_mean = 0.0;         // |E grad log pi|
  double max_group_advantage_mean = 0.0;  // |E A_group|
  double max_constant_reward = 0.0;    // |E c grad log pi| for a constant reward c
};

// Exact enumeration over the 3! permutations of a normalized
// Bradley-Terry policy with free logits theta, group size G = 3.
UnbiasednessReport unbiasedness_check(std::span<const double> theta, std::span<const double> rewards_by_perm);

}  // namespace rsd
