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
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "rsd/oracle.hpp"
#include "rsd/policy.hpp"
#include "rsd/synthetic_oracle.hpp"
#include "rsd/trainer.hpp"

namespace rsd {

struct OracleSpec {
  std::string kind = "synthetic";  // synthetic | trace | http
  SyntheticOracleConfig synthetic;
  std::filesystem::path trace_path;
  std::string url;
  int timeout_ms = 10000;
};

// Methods: std, gsd, rsd (reference advantage), rsd-group (group advantage),
// rsd-sft (Stage I only), rsd-mlp (MLP relevance head).
struct ExperimentConfig {
  OracleSpec oracle;
  int candidates = 20;
  int queries = 2000;
  int validation_queries = 200;  // the last queries
  int test_queries = 200;        // the queries just before validation
  int runs = 5;
  std::uint64_t seed = 0;
  std::vector<std::string> methods = {"std", "gsd", "rsd"};
  std::vector<int> budgets;      // sweep; empty means 1..K
  std::filesystem::path out = "runs";
  PolicyConfig policy;
  TrainConfig train;
  double stage1_lr = 0.0;        // 0: train.adam.lr

  void validate() const;
};

ExperimentConfig default_config();
// Flat INI file: [experiment], [oracle], [data], [policy], [train].
ExperimentConfig load_config(const std::filesystem::path& path);

bool is_known_method(const std::string& method);
bool is_learned_method(const std::string& method);
std::vector<std::string> split_list(const std::string& text);

std::unique_ptr<Oracle> make_oracle(const ExperimentConfig& cfg);

struct QuerySplit {
  std::vector<TrainingQuery> train, validation, test;
};

std::string query_id(int index);
// Query i gets id "q<i>" and the experiment seed; targets come from the oracle.
QuerySplit build_queries(const ExperimentConfig& cfg, const Oracle& oracle);

// dataset.jsonl with {query_id, seed, split, target} per query, plus
// trace.jsonl (targets, prompt-only encodings and GSD episodes at the
// configured budget) when with_trace is set. Returns the written paths.
std::vector<std::filesystem::path> gen_dataset(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                                               bool with_trace);

// Policy configuration and training schedule used by a learned method.
PolicyConfig policy_config_for(const ExperimentConfig& cfg, const std::string& method);
TrainConfig train_config_for(const ExperimentConfig& cfg, const std::string& method, int run);

// Stage I then (except rsd-sft) Stage II for one method and run.
PolicyParams train_method(const ExperimentConfig& cfg, const std::string& method, int run,
                          std::span<const TrainingQuery> train, const Oracle& oracle, const ProgressLog& log = {});

// Every learned method of `methods` for one run. Methods with the same
// architecture share their Stage-I model, which depends only on the run seed.
std::map<std::string, PolicyParams> train_run(const ExperimentConfig& cfg, std::span<const std::string> methods, int run,
                                              std::span<const TrainingQuery> train, const Oracle& oracle,
                                              const ProgressLog& log = {});

std::filesystem::path checkpoint_path(const std::filesystem::path& out, const std::string& method, int run);

// models[method][run]
using ModelSet = std::map<std::string, std::vector<PolicyParams>>;

struct EvalRow {
  std::string method;
  int budget = 0;
  int runs = 0;
  int queries = 0;
  double kt_mean = 0, kt_std = 0;
  double sr_mean = 0, sr_std = 0;
  double fd_mean = 0, fd_std = 0;
  double kd_mean = 0, kd_std = 0;
  double prefix_agreement_mean = 0;
  double encodings_mean = 0;
  std::vector<double> i_star_trajectory;  // mean i* at each verification
  std::vector<double> per_query_kt;       // test order, averaged over runs
};

// Evaluates one method at budget T on the given queries over cfg.runs runs.
// Means are over every (run, query) pair; stds are across run means.
EvalRow evaluate_method(const ExperimentConfig& cfg, const std::string& method, int budget,
                        std::span<const TrainingQuery> queries, const Oracle& oracle, const ModelSet& models);

std::vector<EvalRow> run_eval(const ExperimentConfig& cfg, std::span<const TrainingQuery> queries, const Oracle& oracle,
                              const ModelSet& models);

struct CurvePoint {
  std::string method;
  int budget = 0;
  double kt_mean = 0;
  double prefix_agreement_mean = 0;
  double encodings_mean = 0;
};

// Methods whose policy cannot hold T rounds of history are skipped at that T.
std::vector<CurvePoint> budget_sweep(const ExperimentConfig& cfg, std::span<const TrainingQuery> queries,
                                     const Oracle& oracle, const ModelSet& models, std::span<const int> budgets);

void write_results(const std::vector<EvalRow>& rows, const std::filesystem::path& out_dir);
void write_curves(const std::vector<CurvePoint>& points, const std::filesystem::path& out_dir);

}  // namespace rsd
