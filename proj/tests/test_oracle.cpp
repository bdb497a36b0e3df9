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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <chrono>
#include <filesystem>
#include <random>
#include <thread>

#include <unistd.h>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "reference_impl.hpp"
#include "rsd/cost_model.hpp"
#include "rsd/errors.hpp"
#include "rsd/http_oracle.hpp"
#include "rsd/oracle.hpp"
#include "rsd/synthetic_oracle.hpp"
#include "rsd/trace_oracle.hpp"

using rsd::EncodingMatrix;
using rsd::QueryContext;
using rsd::Ranking;
using rsd::SyntheticOracle;
using rsd::SyntheticOracleParams;

namespace {

SyntheticOracleParams random_params(int k, std::uint64_t seed, double temperature = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  SyntheticOracleParams p;
  for (int j = 0; j < k; ++j) p.base_scores.push_back(n(rng));
  for (int i = 0; i < k * k; ++i) p.interaction.push_back(0.5 * n(rng));
  p.temperature = temperature;
  return p;
}

// Encodings of a synthetic oracle counted from outside.
class CountingOracle final : public rsd::Oracle {
 public:
  explicit CountingOracle(const rsd::Oracle& inner) : inner_(inner) {}
  EncodingMatrix encode(const QueryContext& ctx, const Ranking& sigma) const override {
    ++calls;
    return inner_.encode(ctx, sigma);
  }
  mutable std::atomic<int> calls{0};

 private:
  const rsd::Oracle& inner_;
};

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("rsd_test_" + std::to_string(::getpid()) + "_" + name);
}

}  // namespace

TEST_CASE("synthetic encodings are row-stochastic and zero placed items") {
  rsd::SyntheticOracleConfig cfg;
  cfg.candidates = 8;
  const SyntheticOracle oracle(cfg);
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const QueryContext ctx{"q" + std::to_string(trial), 8, 42};
    const Ranking sigma(ref::random_perm(8, rng));
    const EncodingMatrix s = oracle.encode(ctx, sigma);
    CHECK(rsd::is_valid_encoding(s, sigma));
    for (int m = 0; m < 8; ++m) {
      for (int p = 0; p < m; ++p) CHECK(s.at(m, sigma[p]) == 0.0);
    }
  }
}

TEST_CASE("encoding rows follow the stated softmax") {
  const auto params = random_params(4, 9, 0.7);
  const Ranking sigma{2, 0, 3, 1};
  const EncodingMatrix s = SyntheticOracle::encode_with(params, sigma);
  std::vector<int> prefix;
  for (int m = 0; m < 4; ++m) {
    const auto want = ref::next_item(params, prefix);
    for (int j = 0; j < 4; ++j) CHECK(s.at(m, j) == doctest::Approx(want[static_cast<size_t>(j)]).epsilon(1e-14));
    prefix.push_back(sigma[m]);
  }
  // Row 1 directly from the formula: exp((u_j + W[sigma0, j]) / temp) over unplaced j.
  double z = 0.0;
  std::vector<double> e(4, 0.0);
  for (int j : {0, 1, 3}) {
    e[static_cast<size_t>(j)] = std::exp((params.base_scores[static_cast<size_t>(j)] + params.coupling(2, j)) / 0.7);
    z += e[static_cast<size_t>(j)];
  }
  for (int j : {0, 1, 3}) CHECK(s.at(1, j) == doctest::Approx(e[static_cast<size_t>(j)] / z).epsilon(1e-14));
}

TEST_CASE("worked first-token distribution") {
  SyntheticOracleParams p;
  p.base_scores = {1.0, 0.0, 0.0};
  p.interaction.assign(9, 0.0);
  const SyntheticOracle oracle(p);
  const auto row = rsd::first_token_distribution(oracle, {"q", 3, 0});
  CHECK(row[0] == doctest::Approx(0.5761).epsilon(1e-4));
  CHECK(row[1] == doctest::Approx(0.2119).epsilon(1e-3));
  CHECK(row[2] == doctest::Approx(0.2119).epsilon(1e-3));
  const auto s = oracle.encode({"q", 3, 0}, Ranking{2, 1, 0});
  for (int j = 0; j < 3; ++j) CHECK(s.at(0, j) == row[static_cast<size_t>(j)]);
}

TEST_CASE("zero interaction at low temperature ignores the prefix") {
  SyntheticOracleParams p = random_params(6, 4, 1e-3);
  std::fill(p.interaction.begin(), p.interaction.end(), 0.0);
  const SyntheticOracle oracle(p);
  const QueryContext ctx{"q", 6, 0};
  const Ranking by_score(rsd::argsort_descending(p.base_scores));
  CHECK(oracle.target_ranking(ctx) == by_score);
  std::mt19937_64 rng(8);
  const Ranking sigma(ref::random_perm(6, rng));
  const auto s = oracle.encode(ctx, sigma);
  for (int m = 0; m < 6; ++m) {
    int best = -1;
    for (int j = 0; j < 6; ++j) {
      bool placed = false;
      for (int q = 0; q < m; ++q) placed |= sigma[q] == j;
      if (!placed && (best < 0 || p.base_scores[static_cast<size_t>(j)] > p.base_scores[static_cast<size_t>(best)])) best = j;
    }
    CHECK(rsd::argmax_unplaced(s.row(m), sigma.order().subspan(0, static_cast<size_t>(m))) == best);
  }
}

TEST_CASE("listwise dependence: equal-length prefixes give different rows") {
  const SyntheticOracle oracle(random_params(4, 21));
  const auto a = oracle.encode({"q", 4, 0}, Ranking{0, 1, 2, 3});
  const auto b = oracle.encode({"q", 4, 0}, Ranking{1, 0, 2, 3});
  CHECK(a.at(1, 2) != b.at(1, 2));
}

TEST_CASE("target ranking equals an independent greedy rollout") {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const auto params = random_params(5, seed);
    const SyntheticOracle oracle(params);
    const Ranking target = oracle.target_ranking({"q", 5, seed});
    CHECK(target == Ranking(ref::greedy_rollout(params)));
  }
  rsd::SyntheticOracleConfig cfg;
  cfg.candidates = 12;
  const SyntheticOracle world(cfg);
  for (int i = 0; i < 20; ++i) {
    const QueryContext ctx{"w" + std::to_string(i), 12, 5};
    CHECK(world.target_ranking(ctx) == Ranking(ref::greedy_rollout(world.params_for(ctx))));
  }
}

TEST_CASE("synthetic oracle is deterministic per (seed, query)") {
  rsd::SyntheticOracleConfig cfg;
  cfg.candidates = 6;
  const SyntheticOracle a(cfg), b(cfg);
  const Ranking sigma{5, 3, 1, 0, 2, 4};
  CHECK(a.encode({"x", 6, 1}, sigma) == b.encode({"x", 6, 1}, sigma));
  CHECK_FALSE(a.encode({"x", 6, 1}, sigma) == a.encode({"y", 6, 1}, sigma));
  CHECK_FALSE(a.encode({"x", 6, 1}, sigma) == a.encode({"x", 6, 2}, sigma));
}

TEST_CASE("budget ledger refuses before any oracle work") {
  const SyntheticOracle inner(random_params(4, 1));
  CountingOracle oracle(inner);
  rsd::BudgetLedger ledger(2);
  const QueryContext ctx{"q", 4, 0};
  rsd::encode_ranking(oracle, ctx, Ranking::identity(4), ledger);
  rsd::encode_ranking(oracle, ctx, Ranking::reversed(4), ledger);
  CHECK(ledger.used() == 2);
  CHECK(ledger.exhausted());
  CHECK_THROWS_AS(rsd::encode_ranking(oracle, ctx, Ranking::identity(4), ledger), rsd::BudgetExceeded);
  CHECK(oracle.calls == 2);
  CHECK(ledger.used() == 2);
  CHECK_THROWS_AS(rsd::BudgetLedger(-1), std::invalid_argument);

  rsd::BudgetLedger wide(3);
  CHECK_THROWS_AS(rsd::encode_ranking(oracle, ctx, Ranking::identity(5), wide), rsd::DimensionError);
  CHECK(wide.used() == 0);
}

TEST_CASE("longest consistent prefix matches a row-by-row scan") {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 500; ++trial) {
    const int k = 5;
    const Ranking sigma(ref::random_perm(k, rng));
    EncodingMatrix s(k);
    for (int m = 0; m < k; ++m) {
      // bias toward agreement so long prefixes occur
      for (int j = 0; j < k; ++j) s.at(m, j) = u(rng) + (j == sigma[m] && u(rng) < 0.8 ? 1.0 : 0.0);
      for (int p = 0; p < m; ++p) s.at(m, sigma[p]) = 0.0;
    }
    CHECK(rsd::longest_consistent_prefix(sigma, s) ==
          ref::scan_i_star(std::vector<int>(sigma.order().begin(), sigma.order().end()), s));
  }
}

TEST_CASE("trace round trip is bit-identical") {
  rsd::SyntheticOracleConfig cfg;
  cfg.candidates = 6;
  const SyntheticOracle synthetic(cfg);
  rsd::RecordingOracle recorder(synthetic, 6);
  std::mt19937_64 rng(2);
  std::vector<std::pair<QueryContext, Ranking>> seen;
  for (int i = 0; i < 30; ++i) {
    const QueryContext ctx{"q" + std::to_string(i % 7), 6, 3};
    const Ranking sigma(ref::random_perm(6, rng));
    recorder.encode(ctx, sigma);
    seen.emplace_back(ctx, sigma);
  }
  const QueryContext labelled{"q0", 6, 3};
  const Ranking target = recorder.target_ranking(labelled);
  const auto path = temp_path("trace.jsonl");
  recorder.write(path);
  const auto trace = rsd::TraceOracle::load(path);
  for (const auto& [ctx, sigma] : seen) CHECK(trace.encode(ctx, sigma) == synthetic.encode(ctx, sigma));
  CHECK(trace.target_ranking(labelled) == target);

  rsd::BudgetLedger ledger(5);
  Ranking missing = Ranking::identity(6);
  for (int i = 0; i < 720; ++i) {
    bool recorded = false;
    for (const auto& [ctx, sigma] : seen) recorded |= ctx.query_id == "q1" && sigma == missing;
    if (!recorded) break;
    auto order = std::vector<int>(missing.order().begin(), missing.order().end());
    std::next_permutation(order.begin(), order.end());
    missing = Ranking(order);
  }
  CHECK_THROWS_AS(rsd::encode_ranking(trace, {"q1", 6, 3}, missing, ledger), rsd::MissingTraceEntry);
  CHECK(ledger.used() == 0);
  std::filesystem::remove(path);
}

TEST_CASE("logits responses are renormalized per row") {
  const Ranking sigma{1, 0, 2};
  const std::string body = R"({"logits": [[0.0, 1.0, 2.0], [5.0, 3.0, -1.0], [0.5, 0.5, 0.5]]})";
  const EncodingMatrix s = rsd::encoding_from_logits_json(body, sigma);
  CHECK(rsd::is_valid_encoding(s, sigma));
  CHECK(s.at(1, 1) == 0.0);
  CHECK(s.at(1, 0) == doctest::Approx(std::exp(5.0) / (std::exp(5.0) + std::exp(-1.0))));
  CHECK(s.at(2, 2) == 1.0);
  CHECK_THROWS_AS(rsd::encoding_from_logits_json(R"({"logits": [[1, 2]]})", sigma), rsd::MalformedResponse);
  CHECK_THROWS_AS(rsd::encoding_from_logits_json("not json", sigma), rsd::MalformedResponse);
  CHECK_THROWS_AS(rsd::encoding_from_logits_json(R"({"scores": []})", sigma), rsd::MalformedResponse);
}

TEST_CASE("http oracle against a local ranker") {
  const auto params = random_params(4, 31);
  httplib::Server server;
  server.Post("/encode", [&](const httplib::Request& req, httplib::Response& res) {
    const auto in = nlohmann::json::parse(req.body);
    const Ranking sigma(in.at("ranking").get<std::vector<int>>());
    nlohmann::json logits = nlohmann::json::array();
    std::vector<int> prefix;
    for (int m = 0; m < 4; ++m) {
      std::vector<double> row;
      for (int j = 0; j < 4; ++j) {
        double s = params.base_scores[static_cast<size_t>(j)];
        for (int p : prefix) s += params.coupling(p, j);
        row.push_back(s);
      }
      logits.push_back(row);
      prefix.push_back(sigma[m]);
    }
    res.set_content(nlohmann::json{{"logits", logits}}.dump(), "application/json");
  });
  server.Post("/broken", [](const httplib::Request&, httplib::Response& res) {
    res.status = 500;
    res.set_content("boom", "text/plain");
  });
  server.Post("/slow", [](const httplib::Request&, httplib::Response& res) {
    std::this_thread::sleep_for(std::chrono::milliseconds(600));
    res.set_content("{}", "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  const std::string base = "http://127.0.0.1:" + std::to_string(port);
  const rsd::HttpOracle oracle(base + "/encode", 2000);
  const Ranking sigma{3, 1, 0, 2};
  const auto s = oracle.encode({"q", 4, 0}, sigma);
  const auto want = SyntheticOracle::encode_with(params, sigma);
  for (int m = 0; m < 4; ++m) {
    for (int j = 0; j < 4; ++j) CHECK(s.at(m, j) == doctest::Approx(want.at(m, j)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(rsd::HttpOracle(base + "/broken", 2000).encode({"q", 4, 0}, sigma), rsd::MalformedResponse);
  CHECK_THROWS_AS(rsd::HttpOracle(base + "/slow", 150).encode({"q", 4, 0}, sigma), rsd::HttpTimeout);
  CHECK_THROWS_AS(rsd::HttpOracle("ftp://nowhere", 100), std::invalid_argument);
  server.stop();
  th.join();
}

TEST_CASE("cost model worked values") {
  const auto plain = rsd::estimate_cost(100, 20, 5, 1, false);
  CHECK(plain.rsd_cost == 72000.0);
  CHECK(plain.autoregressive_cost == 29270.0);
  CHECK(plain.sd_cost == 72000.0);
  const auto cached = rsd::estimate_cost(100, 20, 5, 1, true);
  CHECK(cached.rsd_cost == 600.0);
  CHECK(cached.autoregressive_cost == 610.0);
  CHECK(rsd::estimate_cost(100, 20, 0, 1, false).rsd_cost == 0.0);
  CHECK_THROWS_AS(rsd::estimate_cost(0, 20, 5, 1, false), std::invalid_argument);
  CHECK_THROWS_AS(rsd::estimate_cost(100, 20, -1, 1, false), std::invalid_argument);
}
