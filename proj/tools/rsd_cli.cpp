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

#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rsd/cost_model.hpp"
#include "rsd/harness.hpp"
#include "rsd/trainer.hpp"

namespace {

struct CommonOptions {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out;
  std::string methods;
  std::string budgets;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config, "Experiment INI file")->check(CLI::ExistingFile);
  cmd->add_option_function<std::uint64_t>(
      "--seed", [&o](const std::uint64_t& s) { o.seed = s, o.seed_set = true; }, "Master seed");
  cmd->add_option("--out", o.out, "Output directory");
  cmd->add_option("--methods", o.methods, "Comma list of std,gsd,rsd,rsd-group,rsd-sft,rsd-mlp");
  cmd->add_option("--budgets", o.budgets, "Comma list of budgets, ranges like 1-20 allowed");
}

rsd::ExperimentConfig resolve(const CommonOptions& o) {
  rsd::ExperimentConfig cfg = o.config.empty() ? rsd::default_config() : rsd::load_config(o.config);
  if (o.seed_set) cfg.seed = o.seed;
  if (!o.out.empty()) cfg.out = o.out;
  if (!o.methods.empty()) cfg.methods = rsd::split_list(o.methods);
  if (!o.budgets.empty()) {
    cfg.budgets.clear();
    for (const auto& item : rsd::split_list(o.budgets)) {
      const auto dash = item.find('-');
      if (dash != std::string::npos && dash > 0) {
        for (int t = std::stoi(item.substr(0, dash)); t <= std::stoi(item.substr(dash + 1)); ++t) cfg.budgets.push_back(t);
      } else {
        cfg.budgets.push_back(std::stoi(item));
      }
    }
  }
  cfg.validate();
  return cfg;
}

rsd::ModelSet load_models(const rsd::ExperimentConfig& cfg) {
  rsd::ModelSet models;
  for (const auto& method : cfg.methods) {
    if (!rsd::is_learned_method(method)) continue;
    for (int run = 0; run < cfg.runs; ++run) {
      const auto path = rsd::checkpoint_path(cfg.out, method, run);
      if (!std::filesystem::exists(path)) {
        throw std::runtime_error("missing checkpoint " + path.string() + " (run `train` first)");
      }
      models[method].push_back(rsd::load_checkpoint(path));
    }
  }
  return models;
}

int cmd_gen_data(const CommonOptions& o, bool with_trace) {
  const auto cfg = resolve(o);
  for (const auto& path : rsd::gen_dataset(cfg, cfg.out, with_trace)) std::cout << "wrote " << path.string() << '\n';
  return 0;
}

int cmd_train(const CommonOptions& o) {
  const auto cfg = resolve(o);
  const auto oracle = rsd::make_oracle(cfg);
  const auto split = rsd::build_queries(cfg, *oracle);
  std::filesystem::create_directories(cfg.out / "checkpoints");
  std::ofstream log(cfg.out / "train_log.jsonl");
  for (int run = 0; run < cfg.runs; ++run) {
    std::cout << "training run " << run << std::endl;
    const auto models =
        rsd::train_run(cfg, cfg.methods, run, split.train, *oracle, [&](const std::string& line) { log << line << '\n'; });
    for (const auto& [method, params] : models) {
      if (!params.all_finite()) throw std::runtime_error("training produced non-finite parameters");
      rsd::save_checkpoint(params, rsd::checkpoint_path(cfg.out, method, run));
    }
  }
  std::cout << "wrote " << (cfg.out / "train_log.jsonl").string() << '\n';
  return 0;
}

int cmd_eval(const CommonOptions& o) {
  const auto cfg = resolve(o);
  const auto oracle = rsd::make_oracle(cfg);
  const auto split = rsd::build_queries(cfg, *oracle);
  const auto rows = rsd::run_eval(cfg, split.test, *oracle, load_models(cfg));
  rsd::write_results(rows, cfg.out);
  std::printf("%-10s %8s %8s %8s %8s %8s\n", "method", "KT", "SR", "FD", "KD", "enc");
  for (const auto& r : rows) {
    std::printf("%-10s %8.4f %8.4f %8.2f %8.2f %8.2f\n", r.method.c_str(), r.kt_mean, r.sr_mean, r.fd_mean, r.kd_mean,
                r.encodings_mean);
  }
  return 0;
}

int cmd_sweep(const CommonOptions& o) {
  auto cfg = resolve(o);
  if (cfg.budgets.empty()) {
    for (int t = 1; t <= cfg.candidates; ++t) cfg.budgets.push_back(t);
  }
  const auto oracle = rsd::make_oracle(cfg);
  const auto split = rsd::build_queries(cfg, *oracle);
  const auto points = rsd::budget_sweep(cfg, split.test, *oracle, load_models(cfg), cfg.budgets);
  rsd::write_curves(points, cfg.out);
  for (const auto& p : points) {
    std::printf("%-10s T=%-3d KT %.4f prefix %.3f\n", p.method.c_str(), p.budget, p.kt_mean, p.prefix_agreement_mean);
  }
  return 0;
}

int cmd_variance(int group, long samples, double sigma_w) {
  const double boundary = sigma_w * sigma_w / (group - 1.0);
  std::printf("G=%d sigma_w=%.3f boundary sigma_delta^2=%.4f samples=%ld\n", group, sigma_w, boundary, samples);
  std::printf("%12s %10s %10s %10s %10s %8s\n", "sigma_d^2", "var_ref", "theory", "var_grp", "theory", "lower");
  int violations = 0;
  for (double factor : {0.0, 0.5, 1.0, 1.5, 2.0}) {
    rsd::VarianceExpConfig vc;
    vc.group_size = group;
    vc.sigma_w = sigma_w;
    vc.sigma_delta = std::sqrt(factor * boundary);
    vc.n_samples = samples;
    vc.seed = static_cast<std::uint64_t>(factor * 1000) + 1;
    const auto r = rsd::variance_experiment(vc);
    const char* lower = r.theory_ref < r.theory_group ? "ref" : (r.theory_ref > r.theory_group ? "group" : "tie");
    std::printf("%12.4f %10.4f %10.4f %10.4f %10.4f %8s\n", factor * boundary, r.var_ref, r.theory_ref, r.var_group,
                r.theory_group, lower);
    auto off = [](double emp, double th) { return th > 0 ? std::abs(emp - th) / th > 0.05 : std::abs(emp) > 1e-12; };
    if (off(r.var_ref, r.theory_ref) || off(r.var_group, r.theory_group)) ++violations;
  }
  if (violations) std::fprintf(stderr, "%d rows deviate from theory by more than 5%%\n", violations);
  return violations ? 1 : 0;
}

int cmd_cost(double m, int k, int t, double o) {
  for (bool kv : {false, true}) {
    const auto e = rsd::estimate_cost(m, k, t, o, kv);
    std::printf("%-10s M=%g K=%d T=%d o=%g  rsd %.0f  autoregressive %.0f  speculative %.0f\n",
                kv ? "kv-cache" : "no-cache", m, k, t, o, e.rsd_cost, e.autoregressive_cost, e.sd_cost);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Speculative ranking decoder: data generation, training, evaluation and analysis"};
  app.require_subcommand(1);

  CommonOptions gen_o, train_o, eval_o, sweep_o;
  bool with_trace = false;
  auto* gen = app.add_subcommand("gen-data", "Materialize the query set, targets and optional oracle trace");
  add_common(gen, gen_o);
  gen->add_flag("--trace", with_trace, "Also dump a replayable oracle trace");
  auto* train = app.add_subcommand("train", "Train learned methods (Stage I + Stage II) for every run");
  add_common(train, train_o);
  auto* eval = app.add_subcommand("eval", "Evaluate methods on the test split");
  add_common(eval, eval_o);
  auto* sweep = app.add_subcommand("sweep", "Mean KT and prefix agreement against the budget");
  add_common(sweep, sweep_o);

  int group = 5;
  long samples = 1'000'000;
  double sigma_w = 1.0;
  auto* var = app.add_subcommand("variance-check", "Advantage variance table, reference vs group baseline");
  var->add_option("--group", group, "Group size G")->check(CLI::Range(2, 1 << 20));
  var->add_option("--samples", samples, "Monte-Carlo draws per row")->check(CLI::Range(100000L, 1L << 40));
  var->add_option("--sigma-w", sigma_w, "Within-group reward std")->check(CLI::NonNegativeNumber);

  double m = 100, o = 1;
  int k = 20, t = 5;
  auto* cost = app.add_subcommand("cost-model", "Closed-form decoding cost");
  cost->add_option("--prompt-tokens", m, "M")->check(CLI::PositiveNumber);
  cost->add_option("--candidates", k, "K")->check(CLI::PositiveNumber);
  cost->add_option("--budget", t, "T")->check(CLI::NonNegativeNumber);
  cost->add_option("--dim", o, "model width o")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*gen) return cmd_gen_data(gen_o, with_trace);
    if (*train) return cmd_train(train_o);
    if (*eval) return cmd_eval(eval_o);
    if (*sweep) return cmd_sweep(sweep_o);
    if (*var) return cmd_variance(group, samples, sigma_w);
    if (*cost) return cmd_cost(m, k, t, o);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
