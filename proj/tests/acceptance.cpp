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

// Acceptance run: one PASS/FAIL line per criterion, exit status 1 on any FAIL.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "reference_impl.hpp"
#include "rsd/cost_model.hpp"
#include "rsd/decoder.hpp"
#include "rsd/errors.hpp"
#include "rsd/harness.hpp"
#include "rsd/synthetic_oracle.hpp"
#include "rsd/trainer.hpp"

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = true;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

class CountingOracle final : public rsd::Oracle {
 public:
  explicit CountingOracle(const rsd::Oracle& inner) : inner_(inner) {}
  rsd::EncodingMatrix encode(const rsd::QueryContext& ctx, const rsd::Ranking& sigma) const override {
    ++calls;
    return inner_.encode(ctx, sigma);
  }
  mutable int calls = 0;

 private:
  const rsd::Oracle& inner_;
};

rsd::SyntheticOracle synthetic(int k, double pair) {
  rsd::SyntheticOracleConfig c;
  c.candidates = k;
  c.pair_scale = pair;
  return rsd::SyntheticOracle(c);
}

Outcome metrics_vs_brute_force() {
  const auto t0 = Clock::now();
  long mismatches = 0, pairs = 0;
  auto check = [&](const std::vector<int>& a, const std::vector<int>& b) {
    const auto want = ref::brute_metrics(a, b);
    const auto got = rsd::compare_rankings(rsd::Ranking(a), rsd::Ranking(b));
    ++pairs;
    if (got.kt != want.kt || got.sr != want.sr || got.fd != want.fd || got.kd != want.kd) ++mismatches;
  };
  for (int k = 2; k <= 4; ++k) {
    std::vector<int> a(static_cast<size_t>(k));
    std::iota(a.begin(), a.end(), 0);
    do {
      std::vector<int> b(a.size());
      std::iota(b.begin(), b.end(), 0);
      do check(a, b);
      while (std::next_permutation(b.begin(), b.end()));
    } while (std::next_permutation(a.begin(), a.end()));
  }
  std::mt19937_64 rng(1);
  for (int k : {5, 6}) {
    for (int i = 0; i < 10000; ++i) check(ref::random_perm(k, rng), ref::random_perm(k, rng));
  }
  const double secs = seconds_since(t0);
  return {mismatches == 0 && secs < 10.0,
          std::to_string(pairs) + " pairs, " + std::to_string(mismatches) + " mismatches, " + fmt("%.2fs", secs)};
}

Outcome monotone_prefixes() {
  std::mt19937_64 noise(7);
  rsd::Rng rng(8);
  const rsd::TailScorer scorer = [&noise](const rsd::EncodingHistory& h, const rsd::VerifyResult&) {
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> v(static_cast<size_t>(h.back().ranking.size()));
    for (double& x : v) x = n(noise);
    return v;
  };
  long violations = 0;
  const std::vector<rsd::SyntheticOracle> oracles = {synthetic(5, 0.7), synthetic(10, 0.7), synthetic(20, 0.7)};
  for (int e = 0; e < 1000; ++e) {
    const auto& oracle = oracles[static_cast<size_t>(e % 3)];
    const int k = std::vector<int>{5, 10, 20}[static_cast<size_t>(e % 3)];
    const rsd::QueryContext ctx{"mono" + std::to_string(e), k, 1};
    const auto target = oracle.target_ranking(ctx);
    const auto traj = rsd::run_episode(oracle, ctx, k + 1, scorer, rng, rsd::TailMode::kSampled);
    if (!traj.early_exit || traj.final_ranking != target) ++violations;
    for (size_t i = 1; i < traj.i_stars.size(); ++i) {
      if (traj.i_stars[i] <= traj.i_stars[i - 1]) ++violations;
    }
    for (size_t t = 0; t < traj.steps.size(); ++t) {
      if (rsd::prefix_agreement(traj.steps[t].ranking, target) < std::min(static_cast<int>(t) + 1, k)) ++violations;
    }
  }
  return {violations == 0, "1000 episodes, " + std::to_string(violations) + " violations"};
}

Outcome budget_exactness() {
  long bad = 0;
  std::mt19937_64 pick(3);
  for (int trial = 0; trial < 1000; ++trial) {
    const int k = std::vector<int>{5, 10, 20}[static_cast<size_t>(trial % 3)];
    const auto oracle = synthetic(k, 0.7);
    const rsd::QueryContext ctx{"budget" + std::to_string(trial), k, 2};
    const int needed = rsd::run_gsd(oracle, ctx, k + 2).encodings_used;
    const int budget = 1 + static_cast<int>(pick() % static_cast<unsigned>(k + 1));
    CountingOracle counting(oracle);
    const auto traj = rsd::run_gsd(counting, ctx, budget);
    if (traj.encodings_used != std::min(budget, needed) || counting.calls != traj.encodings_used) ++bad;
  }
  // an over-budget call raises before the oracle is touched
  const auto oracle = synthetic(5, 0.7);
  CountingOracle counting(oracle);
  rsd::BudgetLedger ledger(1);
  rsd::encode_ranking(counting, {"x", 5, 0}, rsd::Ranking::identity(5), ledger);
  bool raised = false;
  try {
    rsd::encode_ranking(counting, {"x", 5, 0}, rsd::Ranking::identity(5), ledger);
  } catch (const rsd::BudgetExceeded&) {
    raised = true;
  }
  if (!raised || counting.calls != 1) ++bad;
  return {bad == 0, "1000 trials, " + std::to_string(bad) + " mismatches, over-budget " + (raised ? "raised" : "not raised")};
}

Outcome gradient_check() {
  const auto t0 = Clock::now();
  rsd::PolicyConfig pc;
  pc.candidates = 5;
  pc.d_model = 8;
  pc.n_heads = 2;
  pc.max_rounds = 3;
  auto params = rsd::PolicyParams::initialized(pc, 5);
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n(0.0, 0.1);
  for (double& v : params.values()) v += n(rng);
  const auto oracle = synthetic(5, 0.8);
  const rsd::QueryContext ctx{"grad", 5, 3};
  rsd::EncodingHistory history;
  for (int r = 0; r < 3; ++r) {
    rsd::Ranking sigma(ref::random_perm(5, rng));
    history.push_back({sigma, oracle.encode(ctx, sigma)});
  }
  const rsd::Ranking sigma{2, 4, 0, 1, 3};
  rsd::ForwardTape tape;
  const auto out = rsd::relevance_forward(params, history, &tape);
  auto grad = rsd::PolicyGradient::zeros_like(params);
  rsd::policy_backward(params, tape, rsd::bt_log_prob_grad(out.logits, sigma), grad);
  double worst = 0.0;
  for (size_t i = 0; i < params.size(); ++i) {
    const double saved = params.values()[i];
    params.values()[i] = saved + 1e-5;
    const double up = rsd::bt_log_prob(rsd::relevance_forward(params, history).logits, sigma);
    params.values()[i] = saved - 1e-5;
    const double down = rsd::bt_log_prob(rsd::relevance_forward(params, history).logits, sigma);
    params.values()[i] = saved;
    const double num = (up - down) / 2e-5;
    worst = std::max(worst, std::abs(num - grad.values[i]) / std::max({std::abs(num), std::abs(grad.values[i]), 1e-6}));
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-4 && secs < 60.0, std::to_string(params.size()) + " coordinates, max rel err " +
                                            fmt("%.3e", worst) + ", " + fmt("%.2fs", secs)};
}

Outcome unbiased_baselines() {
  double worst = 0.0;
  std::mt19937_64 rng(12);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> theta(3), rewards(6);
    for (double& x : theta) x = n(rng);
    for (double& x : rewards) x = n(rng);
    const auto rep = rsd::unbiasedness_check(theta, rewards);
    worst = std::max({worst, rep.max_baseline_gap, rep.max_score_mean, rep.max_group_advantage_mean,
                      rep.max_constant_reward});
  }
  return {worst <= 1e-10, "50 random instances, max deviation " + fmt("%.3e", worst)};
}

Outcome variance_formulas() {
  rsd::VarianceExpConfig c;
  c.sigma_b = 1.0;
  c.sigma_w = 1.0;
  c.group_size = 5;
  c.n_samples = 1000000;
  c.seed = 2;
  const double boundary = c.sigma_w * c.sigma_w / (c.group_size - 1);
  bool ok = true;
  std::string detail;
  for (double f : {0.0, 0.5, 1.0, 1.5, 2.0}) {
    c.sigma_delta = std::sqrt(f * boundary);
    const auto r = rsd::variance_experiment(c);
    const double e_ref = std::abs(r.var_ref / r.theory_ref - 1.0);
    const double e_grp = std::abs(r.var_group / r.theory_group - 1.0);
    ok = ok && e_ref < 0.05 && e_grp < 0.05;
    if (f < 1.0) ok = ok && r.theory_ref < r.theory_group && r.var_ref < r.var_group;
    if (f == 1.0) ok = ok && std::abs(r.theory_ref - r.theory_group) < 1e-12 && std::abs(r.var_ref / r.var_group - 1.0) < 0.05;
    if (f > 1.0) ok = ok && r.theory_ref > r.theory_group && r.var_ref > r.var_group;
    detail += fmt("[%.2fx:", f) + fmt(" ref %.4f", r.var_ref) + fmt(" grp %.4f]", r.var_group);
  }
  return {ok, detail};
}

Outcome grpo_identity() {
  rsd::PolicyConfig pc;
  pc.candidates = 5;
  pc.d_model = 6;
  pc.n_heads = 2;
  pc.max_rounds = 3;
  const auto params = rsd::PolicyParams::initialized(pc, 4);
  const auto oracle = synthetic(5, 0.9);
  rsd::Rng rng(2);
  double worst = 0.0;
  int checked = 0;
  for (int q = 0; q < 10; ++q) {
    const rsd::QueryContext ctx{"id" + std::to_string(q), 5, 1};
    const auto traj = rsd::training_rollout(params, ctx, oracle.target_ranking(ctx), oracle, 3, rng);
    if (traj.steps.empty()) continue;
    const auto rep = rsd::grpo_identity_check(params, traj, 0.6);
    worst = std::max({worst, rep.max_rel_err, rep.max_rel_err_clipped});
    ++checked;
  }
  return {checked > 0 && worst <= 1e-6, std::to_string(checked) + " trajectories, max rel err " + fmt("%.3e", worst)};
}

Outcome cost_values() {
  const auto plain = rsd::estimate_cost(100, 20, 5, 1, false);
  const auto kv = rsd::estimate_cost(100, 20, 5, 1, true);
  const bool ok = plain.rsd_cost == 72000 && plain.autoregressive_cost == 29270 && kv.rsd_cost == 600 &&
                  kv.autoregressive_cost == 610;
  return {ok, fmt("%.0f", plain.rsd_cost) + " / " + fmt("%.0f", plain.autoregressive_cost) + " non-cached, " +
                  fmt("%.0f", kv.rsd_cost) + " / " + fmt("%.0f", kv.autoregressive_cost) + " cached"};
}

struct Pipeline {
  rsd::ExperimentConfig cfg;
  std::unique_ptr<rsd::Oracle> oracle;
  rsd::QuerySplit split;
  rsd::ModelSet models;
  double train_seconds = 0.0;
};

Pipeline train_pipeline() {
  Pipeline p;
  p.cfg = rsd::default_config();
  p.cfg.methods = {"std", "gsd", "rsd", "rsd-group"};
  p.oracle = rsd::make_oracle(p.cfg);
  p.split = rsd::build_queries(p.cfg, *p.oracle);
  const auto t0 = Clock::now();
  for (int run = 0; run < p.cfg.runs; ++run) {
    auto models = rsd::train_run(p.cfg, p.cfg.methods, run, p.split.train, *p.oracle);
    for (auto& [method, params] : models) p.models[method].push_back(std::move(params));
    std::fprintf(stderr, "  trained run %d (%.0fs)\n", run, seconds_since(t0));
  }
  p.train_seconds = seconds_since(t0);
  return p;
}

Outcome table_shape(const Pipeline& p) {
  const auto t0 = Clock::now();
  const auto rows = rsd::run_eval(p.cfg, p.split.test, *p.oracle, p.models);
  auto row = [&](const std::string& m) {
    return *std::find_if(rows.begin(), rows.end(), [&](const rsd::EvalRow& r) { return r.method == m; });
  };
  const auto s = row("std"), g = row("gsd"), r = row("rsd"), grp = row("rsd-group");
  double paired = 0.0;
  for (size_t i = 0; i < r.per_query_kt.size(); ++i) paired += r.per_query_kt[i] - g.per_query_kt[i];
  paired /= static_cast<double>(r.per_query_kt.size());
  const double secs = p.train_seconds + seconds_since(t0);
  const bool ok = r.kt_mean > g.kt_mean && g.kt_mean > s.kt_mean && paired >= 0.02 && r.kt_mean >= grp.kt_mean &&
                  secs < 1800.0;
  std::string detail = fmt("KT std %.4f", s.kt_mean) + fmt(" gsd %.4f", g.kt_mean) + fmt(" rsd %.4f", r.kt_mean) +
                       fmt(" (sd %.4f)", r.kt_std) + fmt(" rsd-group %.4f", grp.kt_mean) +
                       fmt(", paired rsd-gsd %+.4f", paired) + fmt(", %.0fs", secs);
  return {ok, detail};
}

Outcome sweep_shape(const Pipeline& p) {
  auto cfg = p.cfg;
  cfg.methods = {"gsd"};
  std::vector<int> budgets(static_cast<size_t>(cfg.candidates));
  std::iota(budgets.begin(), budgets.end(), 1);
  const auto gsd = rsd::budget_sweep(cfg, p.split.test, *p.oracle, p.models, budgets);
  bool ok = true;
  const double full = static_cast<double>(cfg.candidates);
  int saturated_at = 0;
  for (size_t i = 1; i < gsd.size(); ++i) {
    if (gsd[i - 1].prefix_agreement_mean >= full) {
      ok = ok && gsd[i].prefix_agreement_mean >= full;
      continue;
    }
    ok = ok && gsd[i].prefix_agreement_mean > gsd[i - 1].prefix_agreement_mean;
    if (gsd[i].prefix_agreement_mean >= full && saturated_at == 0) saturated_at = gsd[i].budget;
  }
  cfg.methods = {"rsd"};
  const std::vector<int> ends = {1, 5};
  const auto rsd_pts = rsd::budget_sweep(cfg, p.split.test, *p.oracle, p.models, ends);
  ok = ok && rsd_pts.size() == 2 && rsd_pts[1].kt_mean > rsd_pts[0].kt_mean;
  std::string detail = fmt("gsd prefix agreement %.2f", gsd.front().prefix_agreement_mean) +
                       fmt(" -> %.2f", gsd.back().prefix_agreement_mean) +
                       (saturated_at ? " (saturated at T=" + std::to_string(saturated_at) + ")" : std::string()) +
                       fmt(", rsd KT T=1 %.4f", rsd_pts.empty() ? 0.0 : rsd_pts[0].kt_mean) +
                       fmt(" T=5 %.4f", rsd_pts.size() < 2 ? 0.0 : rsd_pts[1].kt_mean);
  return {ok, detail};
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](int id, const char* name, const std::function<Outcome()>& fn) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::printf("%s criterion %d (%s): %s\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str());
    std::fflush(stdout);
  };
  report(1, "metric oracle equivalence", metrics_vs_brute_force);
  report(2, "monotone verified prefixes", monotone_prefixes);
  report(3, "budget exactness", budget_exactness);
  report(4, "gradient correctness", gradient_check);
  report(5, "unbiased baselines", unbiased_baselines);
  report(6, "variance formulas", variance_formulas);
  report(7, "GRPO identity", grpo_identity);

  std::unique_ptr<Pipeline> pipeline;
  std::string pipeline_error;
  try {
    pipeline = std::make_unique<Pipeline>(train_pipeline());
  } catch (const std::exception& e) {
    pipeline_error = e.what();
  }
  auto need_pipeline = [&](Outcome (*fn)(const Pipeline&)) {
    return [&, fn]() -> Outcome {
      if (!pipeline) return {false, "training failed: " + pipeline_error};
      return fn(*pipeline);
    };
  };
  report(8, "synthetic table shape", need_pipeline(table_shape));
  report(9, "budget sweep shape", need_pipeline(sweep_shape));
  report(10, "cost model", cost_values);
  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
