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

#include "rsd/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "rsd/errors.hpp"

namespace rsd {

void TrainConfig::validate() const {
  if (budget < 1) throw std::invalid_argument("TrainConfig: budget must be >= 1");
  if (group_size < 2) throw std::invalid_argument("TrainConfig: group_size must be >= 2");
  if (!(beta_kl >= 0.0)) throw std::invalid_argument("TrainConfig: beta_kl must be >= 0");
  if (batch_queries < 1) throw std::invalid_argument("TrainConfig: batch_queries must be >= 1");
  if (!(adam.lr > 0.0)) throw std::invalid_argument("TrainConfig: lr must be positive");
  if (stage1_steps < 0 || stage2_iters < 0) throw std::invalid_argument("TrainConfig: negative step count");
}

EncodingHistory initial_history(const Oracle& oracle, const QueryContext& ctx) {
  const std::vector<double> row0 = first_token_distribution(oracle, ctx);
  Ranking sigma_init(argsort_descending(row0));
  EncodingMatrix s_init = oracle.encode(ctx, sigma_init);
  return {{std::move(sigma_init), std::move(s_init)}};
}

double supervised_loss(const PolicyParams& params, const EncodingHistory& history, const Ranking& target,
                       PolicyGradient* grad, std::span<const int> fixed) {
  ForwardTape tape;
  const PolicyOutput out = relevance_forward(params, history, grad ? &tape : nullptr);
  if (target.size() != static_cast<int>(out.logits.size())) throw DimensionError("supervised_loss: target size");
  std::vector<double> dl;
  double loss = 0.0;
  if (fixed.empty()) {
    loss = -bt_log_prob(out.logits, target);
    if (grad) {
      dl = bt_log_prob_grad(out.logits, target);
      for (double& v : dl) v = -v;
    }
  } else {
    std::vector<bool> skip(out.logits.size(), false);
    for (int x : fixed) skip.at(static_cast<size_t>(x)) = true;
    std::vector<int> tail;
    for (int x : target.order()) {
      if (!skip[static_cast<size_t>(x)]) tail.push_back(x);
    }
    dl.assign(out.logits.size(), 0.0);
    for (size_t a = 0; a < tail.size(); ++a) {
      for (size_t b = a + 1; b < tail.size(); ++b) {
        const auto ia = static_cast<size_t>(tail[a]), ib = static_cast<size_t>(tail[b]);
        const double d = out.logits[ia] - out.logits[ib];
        loss -= log_sigmoid(d);
        const double w = 1.0 / (1.0 + std::exp(d));
        dl[ia] -= w;
        dl[ib] += w;
      }
    }
  }
  if (grad) policy_backward(params, tape, dl, *grad);
  return loss;
}

std::vector<SupervisedState> decoder_states(const Oracle& oracle, const TrainingQuery& query, int budget) {
  const Trajectory traj = run_gsd(oracle, query.ctx, budget);
  const int k = query.target.size();
  std::vector<SupervisedState> states;
  for (const auto& step : traj.steps) {
    const int fixed = step.i_star + 2;
    if (k - fixed < 2) continue;
    SupervisedState st{EncodingHistory(traj.history.begin(), traj.history.begin() + step.history_rounds),
                       query.target, {}};
    st.fixed.assign(step.ranking.order().begin(), step.ranking.order().begin() + fixed);
    states.push_back(std::move(st));
  }
  return states;
}

double stage1_batch_step(PolicyParams& params, std::span<const SupervisedState> states, Adam& optimizer) {
  if (states.empty()) throw std::invalid_argument("stage1_batch_step: empty batch");
  PolicyGradient grad = PolicyGradient::zeros_like(params);
  double loss = 0.0;
  for (const auto& st : states) loss += supervised_loss(params, st.history, st.target, &grad, st.fixed);
  const double inv = 1.0 / static_cast<double>(states.size());
  grad.scale(inv);
  if (grad.all_finite()) optimizer.step(params.values(), grad.values);
  return loss * inv;
}

double stage1_step(PolicyParams& params, const TrainingQuery& query, const Oracle& oracle, Adam& optimizer) {
  const SupervisedState st{initial_history(oracle, query.ctx), query.target, {}};
  return stage1_batch_step(params, std::span<const SupervisedState>(&st, 1), optimizer);
}

std::vector<double> compute_advantages(std::span<const double> returns, double r_ref, AdvantageMode mode) {
  std::vector<double> adv(returns.size());
  if (mode == AdvantageMode::kReference) {
    for (size_t i = 0; i < returns.size(); ++i) adv[i] = returns[i] - r_ref;
    return adv;
  }
  if (returns.size() < 2) throw std::invalid_argument("compute_advantages: group mode needs at least 2 returns");
  const double total = std::accumulate(returns.begin(), returns.end(), 0.0);
  const double others = static_cast<double>(returns.size() - 1);
  for (size_t i = 0; i < returns.size(); ++i) adv[i] = returns[i] - (total - returns[i]) / others;
  return adv;
}

ReferenceResult reference_rollout(const PolicyParams& snapshot, const QueryContext& ctx, const Ranking& target,
                                  const Oracle& oracle, int budget) {
  Rng unused(0);
  ReferenceResult r;
  r.trajectory = run_episode(oracle, ctx, budget, policy_scorer(snapshot), unused, TailMode::kGreedy);
  r.ranking = r.trajectory.final_ranking;
  r.reward = episode_reward(r.ranking, target);
  r.trajectory.reward = r.reward;
  return r;
}

Trajectory training_rollout(const PolicyParams& params, const QueryContext& ctx, const Ranking& target,
                            const Oracle& oracle, int budget, Rng& rng) {
  Trajectory t = run_episode(oracle, ctx, budget, policy_scorer(params), rng, TailMode::kSampled);
  t.reward = episode_reward(t.final_ranking, target);
  return t;
}

RpoObjective rpo_objective(const PolicyParams& params, const PolicyParams& ref, std::span<const Trajectory> trajectories,
                           double beta_kl, PolicyGradient* grad, StepLogProb log_prob) {
  RpoObjective result;
  if (trajectories.empty()) return result;
  const bool same = &params == &ref || params.values() == ref.values();
  const bool pl = log_prob == StepLogProb::kPlackettLuceTail;
  const double inv_count = 1.0 / static_cast<double>(trajectories.size());
  long kl_states = 0;
  for (const Trajectory& traj : trajectories) {
    if (traj.steps.empty()) continue;
    const double inv_steps = 1.0 / static_cast<double>(traj.steps.size());
    for (const DecodeStep& step : traj.steps) {
      const EncodingHistory history(traj.history.begin(), traj.history.begin() + step.history_rounds);
      ForwardTape tape;
      const PolicyOutput out = relevance_forward(params, history, grad ? &tape : nullptr);
      const std::vector<double> ref_logits = same ? out.logits : relevance_forward(ref, history).logits;
      const int first = step.i_star + 2;
      const double lp = pl ? pl_log_prob(out.logits, step.ranking, first) : bt_log_prob(out.logits, step.ranking);
      const double kl = kl_from_logits(out.logits, ref_logits);
      result.objective += inv_count * inv_steps * (traj.advantage * lp - beta_kl * kl);
      result.mean_kl += kl;
      ++kl_states;
      if (grad) {
        std::vector<double> dl =
            pl ? pl_log_prob_grad(out.logits, step.ranking, first) : bt_log_prob_grad(out.logits, step.ranking);
        const std::vector<double> dkl = kl_from_logits_grad(out.logits, ref_logits);
        const double w = inv_count * inv_steps;
        for (size_t j = 0; j < dl.size(); ++j) dl[j] = w * (traj.advantage * dl[j] - beta_kl * dkl[j]);
        policy_backward(params, tape, dl, *grad);
      }
    }
  }
  if (kl_states > 0) result.mean_kl /= static_cast<double>(kl_states);
  return result;
}

UpdateStats rpo_update(PolicyParams& params, const PolicyParams& ref, std::span<const TrainingQuery> batch,
                       const Oracle& oracle, const TrainConfig& cfg, Adam& optimizer, Rng& rng) {
  cfg.validate();
  UpdateStats stats;
  std::vector<Trajectory> trajectories;
  trajectories.reserve(batch.size() * static_cast<size_t>(cfg.group_size));
  double sum_return = 0.0, sum_adv = 0.0, sum_ref = 0.0;
  for (const TrainingQuery& q : batch) {
    const ReferenceResult reference = reference_rollout(ref, q.ctx, q.target, oracle, cfg.budget);
    std::vector<Trajectory> group;
    std::vector<double> returns;
    for (int g = 0; g < cfg.group_size; ++g) {
      group.push_back(training_rollout(params, q.ctx, q.target, oracle, cfg.budget, rng));
      returns.push_back(group.back().reward);
    }
    const std::vector<double> adv = compute_advantages(returns, reference.reward, cfg.advantage_mode);
    for (size_t g = 0; g < group.size(); ++g) {
      group[g].advantage = adv[g];
      sum_return += returns[g];
      sum_adv += adv[g];
      trajectories.push_back(std::move(group[g]));
    }
    sum_ref += reference.reward;
  }
  const double n = static_cast<double>(trajectories.size());
  stats.mean_return = sum_return / n;
  stats.mean_advantage = sum_adv / n;
  stats.mean_reference_return = sum_ref / static_cast<double>(batch.size());

  PolicyGradient grad = PolicyGradient::zeros_like(params);
  const RpoObjective obj = rpo_objective(params, ref, trajectories, cfg.beta_kl, &grad, cfg.step_log_prob);
  stats.kl = obj.mean_kl;
  stats.grad_norm = grad.norm();
  if (!grad.all_finite()) return stats;
  grad.scale(-1.0);
  optimizer.step(params.values(), grad.values);
  stats.applied = true;
  return stats;
}

namespace {

std::vector<size_t> draw_batch(size_t population, size_t count, Rng& rng) {
  std::vector<size_t> idx(population);
  std::iota(idx.begin(), idx.end(), size_t{0});
  count = std::min(count, population);
  for (size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<size_t> pick(i, population - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(count);
  return idx;
}

}  // namespace

std::vector<double> train_stage1(PolicyParams& params, std::span<const TrainingQuery> queries, const Oracle& oracle,
                                 const TrainConfig& cfg, const ProgressLog& log) {
  cfg.validate();
  if (queries.empty()) throw std::invalid_argument("train_stage1: no training queries");
  std::vector<SupervisedState> states;
  for (const auto& q : queries) {
    if (cfg.stage1_states == Stage1States::kInitial) {
      states.push_back({initial_history(oracle, q.ctx), q.target, {}});
    } else {
      auto visited = decoder_states(oracle, q, cfg.budget);
      std::move(visited.begin(), visited.end(), std::back_inserter(states));
    }
  }
  if (states.empty()) throw std::invalid_argument("train_stage1: no supervised states");
  Adam optimizer(params.size(), cfg.adam);
  Rng rng(cfg.seed ^ 0x535441474531ULL);
  std::vector<double> losses;
  for (int step = 0; step < cfg.stage1_steps; ++step) {
    const auto idx = draw_batch(states.size(), static_cast<size_t>(cfg.batch_queries), rng);
    std::vector<SupervisedState> batch;
    for (size_t i : idx) batch.push_back(states[i]);
    const double loss = stage1_batch_step(params, batch, optimizer);
    losses.push_back(loss);
    if (log) log(nlohmann::json{{"stage", 1}, {"iter", step}, {"loss", loss}}.dump());
  }
  return losses;
}

std::vector<UpdateStats> train_stage2(PolicyParams& params, std::span<const TrainingQuery> queries,
                                      const Oracle& oracle, const TrainConfig& cfg, const ProgressLog& log) {
  cfg.validate();
  if (queries.empty()) throw std::invalid_argument("train_stage2: no training queries");
  Adam optimizer(params.size(), cfg.adam);
  Rng rng(cfg.seed ^ 0x535441474532ULL);
  std::vector<UpdateStats> history;
  for (int iter = 0; iter < cfg.stage2_iters; ++iter) {
    const PolicyParams ref = params;
    const auto idx = draw_batch(queries.size(), static_cast<size_t>(cfg.batch_queries), rng);
    std::vector<TrainingQuery> batch;
    for (size_t i : idx) batch.push_back(queries[i]);
    UpdateStats s = rpo_update(params, ref, batch, oracle, cfg, optimizer, rng);
    s.iter = iter;
    history.push_back(s);
    if (log) {
      log(nlohmann::json{{"stage", 2},
                         {"iter", iter},
                         {"mean_R", s.mean_return},
                         {"mean_adv", s.mean_advantage},
                         {"mean_R_ref", s.mean_reference_return},
                         {"kl", s.kl},
                         {"grad_norm", s.grad_norm},
                         {"applied", s.applied}}
              .dump());
    }
  }
  return history;
}

IdentityReport grpo_identity_check(const PolicyParams& params, const Trajectory& trajectory, double advantage,
                                   double clip_eps) {
  IdentityReport report;
  PolicyGradient ratio_grad = PolicyGradient::zeros_like(params);
  PolicyGradient clipped_grad = PolicyGradient::zeros_like(params);
  PolicyGradient log_grad = PolicyGradient::zeros_like(params);
  for (const DecodeStep& step : trajectory.steps) {
    const EncodingHistory history(trajectory.history.begin(), trajectory.history.begin() + step.history_rounds);
    ForwardTape tape;
    const PolicyOutput out = relevance_forward(params, history, &tape);
    const double lp = bt_log_prob(out.logits, step.ranking);
    const double lp_old = bt_log_prob(relevance_forward(params, history).logits, step.ranking);
    const double ratio = std::exp(lp - lp_old);
    const std::vector<double> dlp = bt_log_prob_grad(out.logits, step.ranking);

    // d/dtheta [ratio * A] = ratio * A * dlp
    std::vector<double> d_ratio(dlp.size());
    for (size_t j = 0; j < dlp.size(); ++j) d_ratio[j] = ratio * advantage * dlp[j];
    policy_backward(params, tape, d_ratio, ratio_grad);

    // min(ratio * A, clip(ratio, 1 - eps, 1 + eps) * A); the clipped branch
    // has zero gradient once the clip is active.
    const double clipped = std::clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps);
    const bool use_unclipped = ratio * advantage <= clipped * advantage;
    std::vector<double> d_clip(dlp.size(), 0.0);
    if (use_unclipped) d_clip = d_ratio;
    policy_backward(params, tape, d_clip, clipped_grad);

    std::vector<double> d_log(dlp.size());
    for (size_t j = 0; j < dlp.size(); ++j) d_log[j] = advantage * dlp[j];
    policy_backward(params, tape, d_log, log_grad);
  }
  for (size_t i = 0; i < log_grad.values.size(); ++i) {
    const double ref = log_grad.values[i];
    const double denom = std::max(std::abs(ref), 1e-12);
    report.max_rel_err = std::max(report.max_rel_err, std::abs(ratio_grad.values[i] - ref) / denom);
    report.max_rel_err_clipped = std::max(report.max_rel_err_clipped, std::abs(clipped_grad.values[i] - ref) / denom);
    report.max_abs_grad = std::max(report.max_abs_grad, std::abs(ref));
  }
  return report;
}

VarianceReport variance_experiment(const VarianceExpConfig& cfg) {
  if (cfg.sigma_b < 0 || cfg.sigma_w < 0 || cfg.sigma_delta < 0) {
    throw std::invalid_argument("variance_experiment: standard deviations must be non-negative");
  }
  if (cfg.group_size < 2) throw std::invalid_argument("variance_experiment: group size must be >= 2");
  if (cfg.n_samples < 2) throw std::invalid_argument("variance_experiment: need at least 2 samples");
  Rng rng(cfg.seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  const int g = cfg.group_size;
  std::vector<double> r(static_cast<size_t>(g));
  // Welford accumulators over draws of R_0 - R_ref and R_0 - mean(R_1..R_{G-1}).
  double mean_ref = 0, m2_ref = 0, mean_group = 0, m2_group = 0;
  for (long n = 1; n <= cfg.n_samples; ++n) {
    const double mu = cfg.sigma_b * unit(rng);
    const double r_ref = mu + cfg.sigma_delta * unit(rng);
    double total = 0.0;
    for (auto& x : r) {
      x = mu + cfg.sigma_w * unit(rng);
      total += x;
    }
    const double a_ref = r[0] - r_ref;
    const double a_group = r[0] - (total - r[0]) / (g - 1);
    const double d1 = a_ref - mean_ref;
    mean_ref += d1 / static_cast<double>(n);
    m2_ref += d1 * (a_ref - mean_ref);
    const double d2 = a_group - mean_group;
    mean_group += d2 / static_cast<double>(n);
    m2_group += d2 * (a_group - mean_group);
  }
  VarianceReport rep;
  rep.var_ref = m2_ref / static_cast<double>(cfg.n_samples - 1);
  rep.var_group = m2_group / static_cast<double>(cfg.n_samples - 1);
  const double w2 = cfg.sigma_w * cfg.sigma_w;
  rep.theory_ref = w2 + cfg.sigma_delta * cfg.sigma_delta;
  rep.theory_group = w2 * g / (g - 1.0);
  return rep;
}

UnbiasednessReport unbiasedness_check(std::span<const double> theta, std::span<const double> rewards_by_perm) {
  constexpr int kItems = 3;
  constexpr int kPerms = 6;
  constexpr int kGroup = 3;
  if (theta.size() != kItems || rewards_by_perm.size() != kPerms) {
    throw DimensionError("unbiasedness_check: expects 3 logits and 6 rewards");
  }
  std::vector<Ranking> perms;
  std::vector<int> order = {0, 1, 2};
  do perms.emplace_back(order);
  while (std::next_permutation(order.begin(), order.end()));

  // Normalized Bradley-Terry law and its score function.
  std::vector<double> prob(kPerms), lp(kPerms);
  std::vector<std::vector<double>> bt_grad(kPerms);
  for (int i = 0; i < kPerms; ++i) {
    lp[static_cast<size_t>(i)] = bt_log_prob(theta, perms[static_cast<size_t>(i)]);
    bt_grad[static_cast<size_t>(i)] = bt_log_prob_grad(theta, perms[static_cast<size_t>(i)]);
  }
  const double m = *std::max_element(lp.begin(), lp.end());
  double z = 0.0;
  for (int i = 0; i < kPerms; ++i) z += std::exp(lp[static_cast<size_t>(i)] - m);
  for (int i = 0; i < kPerms; ++i) prob[static_cast<size_t>(i)] = std::exp(lp[static_cast<size_t>(i)] - m) / z;
  std::vector<double> mean_bt(kItems, 0.0);
  for (int i = 0; i < kPerms; ++i) {
    for (int j = 0; j < kItems; ++j) mean_bt[static_cast<size_t>(j)] += prob[static_cast<size_t>(i)] * bt_grad[static_cast<size_t>(i)][static_cast<size_t>(j)];
  }
  std::vector<std::vector<double>> score(kPerms, std::vector<double>(kItems));
  for (int i = 0; i < kPerms; ++i) {
    for (int j = 0; j < kItems; ++j) {
      score[static_cast<size_t>(i)][static_cast<size_t>(j)] = bt_grad[static_cast<size_t>(i)][static_cast<size_t>(j)] - mean_bt[static_cast<size_t>(j)];
    }
  }

  UnbiasednessReport rep;
  rep.grad_no_baseline.assign(kItems, 0.0);
  rep.grad_group_baseline.assign(kItems, 0.0);
  rep.grad_reference_baseline.assign(kItems, 0.0);
  rep.grad_greedy_reference.assign(kItems, 0.0);
  std::vector<double> score_mean(kItems, 0.0), constant(kItems, 0.0);
  const auto greedy = std::max_element(prob.begin(), prob.end()) - prob.begin();
  const double r_greedy = rewards_by_perm[static_cast<size_t>(greedy)];
  const double c = 0.75;

  for (int a = 0; a < kPerms; ++a) {
    const double pa = prob[static_cast<size_t>(a)];
    const double ra = rewards_by_perm[static_cast<size_t>(a)];
    for (int j = 0; j < kItems; ++j) {
      const double s = score[static_cast<size_t>(a)][static_cast<size_t>(j)];
      score_mean[static_cast<size_t>(j)] += pa * s;
      rep.grad_no_baseline[static_cast<size_t>(j)] += pa * ra * s;
      rep.grad_greedy_reference[static_cast<size_t>(j)] += pa * (ra - r_greedy) * s;
      constant[static_cast<size_t>(j)] += pa * c * s;
    }
    // Reference return from an independent draw of the reference policy.
    for (int b = 0; b < kPerms; ++b) {
      const double pab = pa * prob[static_cast<size_t>(b)];
      for (int j = 0; j < kItems; ++j) {
        rep.grad_reference_baseline[static_cast<size_t>(j)] +=
            pab * (ra - rewards_by_perm[static_cast<size_t>(b)]) * score[static_cast<size_t>(a)][static_cast<size_t>(j)];
      }
    }
  }

  // Group of three independent draws; member 0's advantage uses the
  // leave-one-out mean. E[A_i] is checked for every member.
  double group_adv_mean[kGroup] = {0, 0, 0};
  for (int a = 0; a < kPerms; ++a) {
    for (int b = 0; b < kPerms; ++b) {
      for (int c3 = 0; c3 < kPerms; ++c3) {
        const double p = prob[static_cast<size_t>(a)] * prob[static_cast<size_t>(b)] * prob[static_cast<size_t>(c3)];
        const double r[kGroup] = {rewards_by_perm[static_cast<size_t>(a)], rewards_by_perm[static_cast<size_t>(b)],
                                  rewards_by_perm[static_cast<size_t>(c3)]};
        const std::vector<double> adv = compute_advantages(r, 0.0, AdvantageMode::kGroup);
        for (int i = 0; i < kGroup; ++i) group_adv_mean[i] += p * adv[static_cast<size_t>(i)];
        for (int j = 0; j < kItems; ++j) {
          rep.grad_group_baseline[static_cast<size_t>(j)] += p * adv[0] * score[static_cast<size_t>(a)][static_cast<size_t>(j)];
        }
      }
    }
  }

  for (int j = 0; j < kItems; ++j) {
    const double base = rep.grad_no_baseline[static_cast<size_t>(j)];
    rep.max_baseline_gap = std::max({rep.max_baseline_gap, std::abs(rep.grad_group_baseline[static_cast<size_t>(j)] - base),
                                     std::abs(rep.grad_reference_baseline[static_cast<size_t>(j)] - base),
                                     std::abs(rep.grad_greedy_reference[static_cast<size_t>(j)] - base)});
    rep.max_score_mean = std::max(rep.max_score_mean, std::abs(score_mean[static_cast<size_t>(j)]));
    rep.max_constant_reward = std::max(rep.max_constant_reward, std::abs(constant[static_cast<size_t>(j)]));
  }
  for (double v : group_adv_mean) rep.max_group_advantage_mean = std::max(rep.max_group_advantage_mean, std::abs(v));
  return rep;
}

}  // namespace rsd
