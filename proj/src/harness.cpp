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

#include "rsd/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <nlohmann/json.hpp>

#include "rsd/decoder.hpp"
#include "rsd/http_oracle.hpp"
#include "rsd/trace_oracle.hpp"

namespace rsd {
namespace {

const std::vector<std::string> kMethods = {"std", "gsd", "rsd", "rsd-group", "rsd-sft", "rsd-mlp"};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  for (const auto& item : split_list(text)) {
    const auto dash = item.find('-');
    if (dash != std::string::npos && dash > 0) {
      const int lo = std::stoi(item.substr(0, dash));
      const int hi = std::stoi(item.substr(dash + 1));
      for (int v = lo; v <= hi; ++v) out.push_back(v);
    } else {
      out.push_back(std::stoi(item));
    }
  }
  return out;
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

std::uint64_t run_seed(std::uint64_t seed, int run) {
  return seed * 1000003ULL + static_cast<std::uint64_t>(run) * 7919ULL + 17ULL;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (candidates < 2) throw std::invalid_argument("config: candidates must be >= 2");
  if (queries < 1 || validation_queries < 0 || test_queries < 1) throw std::invalid_argument("config: bad query counts");
  if (validation_queries + test_queries >= queries) {
    throw std::invalid_argument("config: validation + test queries leave no training split");
  }
  if (runs < 1) throw std::invalid_argument("config: runs must be >= 1");
  for (const auto& m : methods) {
    if (!is_known_method(m)) throw std::invalid_argument("config: unknown method '" + m + "'");
  }
  for (int t : budgets) {
    if (t < 1) throw std::invalid_argument("config: budgets must be >= 1");
  }
  if (oracle.kind == "synthetic" && oracle.synthetic.candidates != candidates) {
    throw std::invalid_argument("config: oracle candidates disagree with K");
  }
  if (oracle.kind != "synthetic" && oracle.kind != "trace" && oracle.kind != "http") {
    throw std::invalid_argument("config: oracle kind must be synthetic, trace or http");
  }
  train.validate();
}

ExperimentConfig default_config() {
  ExperimentConfig cfg;
  cfg.train.adam.lr = 5e-5;
  cfg.stage1_lr = 3e-3;
  cfg.train.stage1_steps = 6000;
  cfg.train.stage1_states = Stage1States::kDecoder;
  cfg.train.step_log_prob = StepLogProb::kPlackettLuceTail;
  cfg.policy.max_rounds = 0;
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(path.string(), tree);
  } catch (const pt::ini_parser_error& e) {
    throw std::invalid_argument("config: " + std::string(e.what()));
  }
  ExperimentConfig cfg = default_config();
  auto get_str = [&](const char* key, const std::string& fallback) { return trim(tree.get<std::string>(key, fallback)); };

  cfg.seed = tree.get<std::uint64_t>("experiment.seed", cfg.seed);
  cfg.runs = tree.get<int>("experiment.runs", cfg.runs);
  if (auto m = tree.get_optional<std::string>("experiment.methods")) cfg.methods = split_list(*m);
  if (auto b = tree.get_optional<std::string>("experiment.budgets")) cfg.budgets = parse_int_list(*b);
  cfg.out = get_str("experiment.out", cfg.out.string());

  cfg.candidates = tree.get<int>("oracle.candidates", cfg.candidates);
  cfg.oracle.kind = get_str("oracle.kind", cfg.oracle.kind);
  auto& syn = cfg.oracle.synthetic;
  syn.candidates = cfg.candidates;
  syn.base_scale = tree.get<double>("oracle.base_scale", syn.base_scale);
  syn.drift_scale = tree.get<double>("oracle.drift_scale", syn.drift_scale);
  syn.pair_scale = tree.get<double>("oracle.pair_scale", syn.pair_scale);
  syn.temperature = tree.get<double>("oracle.temperature", syn.temperature);
  syn.world_seed = tree.get<std::uint64_t>("oracle.world_seed", syn.world_seed);
  cfg.oracle.trace_path = get_str("oracle.trace_path", "");
  cfg.oracle.url = get_str("oracle.url", "");
  cfg.oracle.timeout_ms = tree.get<int>("oracle.timeout_ms", cfg.oracle.timeout_ms);

  cfg.queries = tree.get<int>("data.queries", cfg.queries);
  cfg.validation_queries = tree.get<int>("data.validation", cfg.validation_queries);
  cfg.test_queries = tree.get<int>("data.test", cfg.test_queries);

  cfg.policy.n_heads = tree.get<int>("policy.n_heads", cfg.policy.n_heads);
  cfg.policy.d_model = tree.get<int>("policy.d_model", cfg.policy.d_model);
  cfg.policy.ffn_hidden = tree.get<int>("policy.ffn_hidden", cfg.policy.ffn_hidden);
  cfg.policy.max_rounds = tree.get<int>("policy.max_rounds", cfg.policy.max_rounds);
  cfg.policy.mark_rejection = tree.get<bool>("policy.mark_rejection", cfg.policy.mark_rejection);
  cfg.policy.log_features = tree.get<bool>("policy.log_features", cfg.policy.log_features);

  auto& tr = cfg.train;
  tr.budget = tree.get<int>("train.budget", tr.budget);
  tr.group_size = tree.get<int>("train.group_size", tr.group_size);
  tr.adam.lr = tree.get<double>("train.lr", tr.adam.lr);
  cfg.stage1_lr = tree.get<double>("train.stage1_lr", cfg.stage1_lr);
  tr.beta_kl = tree.get<double>("train.beta_kl", tr.beta_kl);
  tr.batch_queries = tree.get<int>("train.batch_queries", tr.batch_queries);
  tr.stage1_steps = tree.get<int>("train.stage1_steps", tr.stage1_steps);
  tr.stage2_iters = tree.get<int>("train.stage2_iters", tr.stage2_iters);
  const std::string mode = get_str("train.advantage_mode", "reference");
  if (mode == "reference") {
    tr.advantage_mode = AdvantageMode::kReference;
  } else if (mode == "group") {
    tr.advantage_mode = AdvantageMode::kGroup;
  } else {
    throw std::invalid_argument("config: advantage_mode must be reference or group");
  }
  const std::string lp = get_str("train.step_log_prob", "pl");
  if (lp == "bt") {
    tr.step_log_prob = StepLogProb::kBradleyTerry;
  } else if (lp == "pl") {
    tr.step_log_prob = StepLogProb::kPlackettLuceTail;
  } else {
    throw std::invalid_argument("config: step_log_prob must be bt or pl");
  }
  const std::string states = get_str("train.stage1_states", "decoder");
  if (states == "decoder") {
    tr.stage1_states = Stage1States::kDecoder;
  } else if (states == "initial") {
    tr.stage1_states = Stage1States::kInitial;
  } else {
    throw std::invalid_argument("config: stage1_states must be decoder or initial");
  }
  cfg.validate();
  return cfg;
}

bool is_known_method(const std::string& method) {
  return std::find(kMethods.begin(), kMethods.end(), method) != kMethods.end();
}

bool is_learned_method(const std::string& method) { return method.rfind("rsd", 0) == 0; }

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::unique_ptr<Oracle> make_oracle(const ExperimentConfig& cfg) {
  if (cfg.oracle.kind == "synthetic") return std::make_unique<SyntheticOracle>(cfg.oracle.synthetic);
  if (cfg.oracle.kind == "trace") {
    auto trace = std::make_unique<TraceOracle>(TraceOracle::load(cfg.oracle.trace_path));
    if (trace->candidates() != cfg.candidates) throw std::invalid_argument("config: trace K disagrees with config");
    return trace;
  }
  return std::make_unique<HttpOracle>(cfg.oracle.url, cfg.oracle.timeout_ms);
}

std::string query_id(int index) { return "q" + std::to_string(index); }

QuerySplit build_queries(const ExperimentConfig& cfg, const Oracle& oracle) {
  QuerySplit split;
  const int n_train = cfg.queries - cfg.validation_queries - cfg.test_queries;
  for (int i = 0; i < cfg.queries; ++i) {
    QueryContext ctx{query_id(i), cfg.candidates, cfg.seed};
    TrainingQuery q{ctx, oracle.target_ranking(ctx)};
    if (i < n_train) {
      split.train.push_back(std::move(q));
    } else if (i < n_train + cfg.test_queries) {
      split.test.push_back(std::move(q));
    } else {
      split.validation.push_back(std::move(q));
    }
  }
  return split;
}

std::vector<std::filesystem::path> gen_dataset(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                                               bool with_trace) {
  std::filesystem::create_directories(out_dir);
  const auto oracle = make_oracle(cfg);
  RecordingOracle recorder(*oracle, cfg.candidates);
  const Oracle& source = with_trace ? static_cast<const Oracle&>(recorder) : *oracle;
  const QuerySplit split = build_queries(cfg, source);

  std::vector<std::filesystem::path> written;
  const auto dataset = out_dir / "dataset.jsonl";
  std::ofstream out(dataset);
  if (!out) throw std::runtime_error("gen-data: cannot write " + dataset.string());
  auto emit = [&](const std::vector<TrainingQuery>& qs, const char* name) {
    for (const auto& q : qs) {
      out << nlohmann::json{{"query_id", q.ctx.query_id},
                            {"seed", q.ctx.seed},
                            {"split", name},
                            {"target", std::vector<int>(q.target.order().begin(), q.target.order().end())}}
                 .dump()
          << '\n';
    }
  };
  emit(split.train, "train");
  emit(split.test, "test");
  emit(split.validation, "validation");
  written.push_back(dataset);

  if (with_trace) {
    for (const auto& q : split.test) {
      run_std(recorder, q.ctx);
      run_gsd(recorder, q.ctx, cfg.train.budget);
    }
    const auto trace = out_dir / "trace.jsonl";
    recorder.write(trace);
    written.push_back(trace);
  }
  return written;
}

PolicyConfig policy_config_for(const ExperimentConfig& cfg, const std::string& method) {
  PolicyConfig pc = cfg.policy;
  pc.candidates = cfg.candidates;
  if (pc.max_rounds <= 0) pc.max_rounds = cfg.train.budget;
  pc.arch = method == "rsd-mlp" ? PolicyArch::kMlp : PolicyArch::kTransformer;
  return pc.resolved();
}

TrainConfig train_config_for(const ExperimentConfig& cfg, const std::string& method, int run) {
  TrainConfig tc = cfg.train;
  tc.seed = run_seed(cfg.seed, run);
  if (method == "rsd-group") tc.advantage_mode = AdvantageMode::kGroup;
  if (method == "rsd") tc.advantage_mode = AdvantageMode::kReference;
  if (method == "rsd-sft") tc.stage2_iters = 0;
  return tc;
}

namespace {

ProgressLog tag_log(const ProgressLog& log, const std::string& method, int run) {
  if (!log) return {};
  return [log, method, run](const std::string& line) {
    auto j = nlohmann::json::parse(line);
    j["method"] = method;
    j["run"] = run;
    log(j.dump());
  };
}

PolicyParams stage1_model(const ExperimentConfig& cfg, const std::string& method, int run,
                          std::span<const TrainingQuery> train, const Oracle& oracle, const ProgressLog& log) {
  TrainConfig stage1 = train_config_for(cfg, method, run);
  PolicyParams params = PolicyParams::initialized(policy_config_for(cfg, method), stage1.seed);
  if (cfg.stage1_lr > 0.0) stage1.adam.lr = cfg.stage1_lr;
  train_stage1(params, train, oracle, stage1, log);
  return params;
}

}  // namespace

PolicyParams train_method(const ExperimentConfig& cfg, const std::string& method, int run,
                          std::span<const TrainingQuery> train, const Oracle& oracle, const ProgressLog& log) {
  const std::string one[] = {method};
  return train_run(cfg, one, run, train, oracle, log).at(method);
}

std::map<std::string, PolicyParams> train_run(const ExperimentConfig& cfg, std::span<const std::string> methods, int run,
                                              std::span<const TrainingQuery> train, const Oracle& oracle,
                                              const ProgressLog& log) {
  std::map<std::string, PolicyParams> out;
  std::map<PolicyArch, PolicyParams> stage1;
  for (const auto& method : methods) {
    if (!is_learned_method(method)) continue;
    if (!is_known_method(method)) throw std::invalid_argument("train: unknown method '" + method + "'");
    const auto arch = policy_config_for(cfg, method).arch;
    auto it = stage1.find(arch);
    if (it == stage1.end()) {
      it = stage1.emplace(arch, stage1_model(cfg, method, run, train, oracle, tag_log(log, method, run))).first;
    }
    PolicyParams params = it->second;
    const TrainConfig tc = train_config_for(cfg, method, run);
    if (tc.stage2_iters > 0) train_stage2(params, train, oracle, tc, tag_log(log, method, run));
    out.emplace(method, std::move(params));
  }
  return out;
}

std::filesystem::path checkpoint_path(const std::filesystem::path& out, const std::string& method, int run) {
  return out / "checkpoints" / (method + "_run" + std::to_string(run) + ".bin");
}

EvalRow evaluate_method(const ExperimentConfig& cfg, const std::string& method, int budget,
                        std::span<const TrainingQuery> queries, const Oracle& oracle, const ModelSet& models) {
  if (!is_known_method(method)) throw std::invalid_argument("evaluate: unknown method '" + method + "'");
  const bool learned = is_learned_method(method);
  if (learned) {
    const auto it = models.find(method);
    if (it == models.end() || static_cast<int>(it->second.size()) < cfg.runs) {
      throw std::invalid_argument("evaluate: no trained models for '" + method + "'");
    }
  }
  EvalRow row;
  row.method = method;
  row.budget = budget;
  row.runs = cfg.runs;
  row.queries = static_cast<int>(queries.size());
  row.per_query_kt.assign(queries.size(), 0.0);
  std::vector<double> kt_runs, sr_runs, fd_runs, kd_runs;
  std::vector<double> istar_sum;
  std::vector<long> istar_count;
  double prefix_total = 0, enc_total = 0;

  for (int run = 0; run < cfg.runs; ++run) {
    double kt = 0, sr = 0, fd = 0, kd = 0;
    for (size_t qi = 0; qi < queries.size(); ++qi) {
      const auto& q = queries[qi];
      Trajectory traj;
      if (method == "std") {
        traj.final_ranking = run_std(oracle, q.ctx);
        traj.encodings_used = 1;
      } else if (method == "gsd") {
        traj = run_gsd(oracle, q.ctx, budget);
      } else {
        Rng unused(0);
        traj = run_episode(oracle, q.ctx, budget, policy_scorer(models.at(method)[static_cast<size_t>(run)]), unused,
                           TailMode::kGreedy);
      }
      const MetricReport m = compare_rankings(traj.final_ranking, q.target);
      kt += m.kt;
      sr += m.sr;
      fd += static_cast<double>(m.fd);
      kd += static_cast<double>(m.kd);
      row.per_query_kt[qi] += m.kt / cfg.runs;
      prefix_total += prefix_agreement(traj.final_ranking, q.target);
      enc_total += traj.encodings_used;
      for (size_t v = 0; v < traj.i_stars.size(); ++v) {
        if (istar_sum.size() <= v) {
          istar_sum.push_back(0.0);
          istar_count.push_back(0);
        }
        istar_sum[v] += traj.i_stars[v];
        ++istar_count[v];
      }
    }
    const double n = static_cast<double>(queries.size());
    kt_runs.push_back(kt / n);
    sr_runs.push_back(sr / n);
    fd_runs.push_back(fd / n);
    kd_runs.push_back(kd / n);
  }
  const double pairs = static_cast<double>(cfg.runs) * static_cast<double>(queries.size());
  row.kt_mean = mean_of(kt_runs);
  row.kt_std = std_of(kt_runs);
  row.sr_mean = mean_of(sr_runs);
  row.sr_std = std_of(sr_runs);
  row.fd_mean = mean_of(fd_runs);
  row.fd_std = std_of(fd_runs);
  row.kd_mean = mean_of(kd_runs);
  row.kd_std = std_of(kd_runs);
  row.prefix_agreement_mean = prefix_total / pairs;
  row.encodings_mean = enc_total / pairs;
  for (size_t v = 0; v < istar_sum.size(); ++v) row.i_star_trajectory.push_back(istar_sum[v] / istar_count[v]);
  return row;
}

std::vector<EvalRow> run_eval(const ExperimentConfig& cfg, std::span<const TrainingQuery> queries, const Oracle& oracle,
                              const ModelSet& models) {
  std::vector<EvalRow> rows;
  for (const auto& method : cfg.methods) {
    rows.push_back(evaluate_method(cfg, method, cfg.train.budget, queries, oracle, models));
  }
  return rows;
}

std::vector<CurvePoint> budget_sweep(const ExperimentConfig& cfg, std::span<const TrainingQuery> queries,
                                     const Oracle& oracle, const ModelSet& models, std::span<const int> budgets) {
  std::vector<CurvePoint> points;
  for (const auto& method : cfg.methods) {
    for (int t : budgets) {
      if (is_learned_method(method)) {
        const auto it = models.find(method);
        if (it == models.end() || it->second.empty() || t > it->second.front().config().max_rounds) continue;
      }
      const EvalRow row = evaluate_method(cfg, method, t, queries, oracle, models);
      points.push_back({method, t, row.kt_mean, row.prefix_agreement_mean, row.encodings_mean});
    }
  }
  return points;
}

void write_results(const std::vector<EvalRow>& rows, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::ofstream csv(out_dir / "results.csv");
  csv << "method,budget,runs,queries,kt_mean,kt_std,sr_mean,sr_std,fd_mean,fd_std,kd_mean,kd_std,"
         "prefix_agreement_mean,encodings_mean\n";
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : rows) {
    csv << r.method << ',' << r.budget << ',' << r.runs << ',' << r.queries << ',' << fmt(r.kt_mean) << ','
        << fmt(r.kt_std) << ',' << fmt(r.sr_mean) << ',' << fmt(r.sr_std) << ',' << fmt(r.fd_mean) << ','
        << fmt(r.fd_std) << ',' << fmt(r.kd_mean) << ',' << fmt(r.kd_std) << ',' << fmt(r.prefix_agreement_mean)
        << ',' << fmt(r.encodings_mean) << '\n';
    j.push_back({{"method", r.method},
                 {"budget", r.budget},
                 {"runs", r.runs},
                 {"queries", r.queries},
                 {"kt", {{"mean", r.kt_mean}, {"std", r.kt_std}}},
                 {"sr", {{"mean", r.sr_mean}, {"std", r.sr_std}}},
                 {"fd", {{"mean", r.fd_mean}, {"std", r.fd_std}}},
                 {"kd", {{"mean", r.kd_mean}, {"std", r.kd_std}}},
                 {"prefix_agreement_mean", r.prefix_agreement_mean},
                 {"encodings_mean", r.encodings_mean},
                 {"i_star_trajectory", r.i_star_trajectory},
                 {"per_query_kt", r.per_query_kt}});
  }
  std::ofstream(out_dir / "results.json") << j.dump(2) << '\n';
}

void write_curves(const std::vector<CurvePoint>& points, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::ofstream csv(out_dir / "curves.csv");
  csv << "method,budget,kt_mean,prefix_agreement_mean,encodings_mean\n";
  for (const auto& p : points) {
    csv << p.method << ',' << p.budget << ',' << fmt(p.kt_mean) << ',' << fmt(p.prefix_agreement_mean) << ','
        << fmt(p.encodings_mean) << '\n';
  }
}

}  // namespace rsd
