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

#include "rsd/synthetic_oracle.hpp"

#include <random>
#include <string>

#include "rsd/errors.hpp"

namespace rsd {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t query_stream_seed(std::uint64_t seed, const std::string& query_id) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : query_id) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return splitmix64(seed ^ splitmix64(h));
}

SyntheticOracle::SyntheticOracle(SyntheticOracleConfig config) : config_(config) {
  if (config_.candidates < 2) throw std::invalid_argument("SyntheticOracle: need K >= 2");
  if (!(config_.temperature > 0.0)) throw std::invalid_argument("SyntheticOracle: temperature must be > 0");
  std::mt19937_64 rng(splitmix64(config_.world_seed ^ 0x5eedd81f7ULL));
  std::normal_distribution<double> normal(0.0, 1.0);
  drift_.resize(static_cast<size_t>(config_.candidates));
  for (double& d : drift_) d = config_.drift_scale * normal(rng);
}

SyntheticOracle::SyntheticOracle(SyntheticOracleParams fixed) {
  const int k = fixed.candidates();
  if (k < 2) throw std::invalid_argument("SyntheticOracle: need K >= 2");
  if (fixed.interaction.size() != static_cast<size_t>(k) * static_cast<size_t>(k)) {
    throw DimensionError("SyntheticOracle: interaction must be K x K");
  }
  if (!(fixed.temperature > 0.0)) throw std::invalid_argument("SyntheticOracle: temperature must be > 0");
  config_.candidates = k;
  config_.temperature = fixed.temperature;
  fixed_ = std::move(fixed);
}

SyntheticOracleParams SyntheticOracle::params_for(const QueryContext& ctx) const {
  if (fixed_) return *fixed_;
  const int k = config_.candidates;
  std::mt19937_64 rng(query_stream_seed(ctx.seed, ctx.query_id));
  std::normal_distribution<double> normal(0.0, 1.0);
  SyntheticOracleParams p;
  p.temperature = config_.temperature;
  p.base_scores.resize(static_cast<size_t>(k));
  for (double& u : p.base_scores) u = config_.base_scale * normal(rng);
  p.interaction.resize(static_cast<size_t>(k) * static_cast<size_t>(k));
  for (int r = 0; r < k; ++r) {
    for (int j = 0; j < k; ++j) {
      p.interaction[static_cast<size_t>(r * k + j)] = drift_[static_cast<size_t>(j)] + config_.pair_scale * normal(rng);
    }
  }
  return p;
}

EncodingMatrix SyntheticOracle::encode_with(const SyntheticOracleParams& params, const Ranking& sigma) {
  const int k = params.candidates();
  if (sigma.size() != k) {
    throw DimensionError("synthetic oracle: ranking has " + std::to_string(sigma.size()) + " items, expected " +
                         std::to_string(k));
  }
  EncodingMatrix s(k);
  std::vector<double> scores = params.base_scores;
  const auto order = sigma.order();
  for (int m = 0; m < k; ++m) {
    masked_softmax(scores, order.subspan(0, static_cast<size_t>(m)), params.temperature, s.row(m));
    const int placed = order[static_cast<size_t>(m)];
    for (int j = 0; j < k; ++j) scores[static_cast<size_t>(j)] += params.coupling(placed, j);
  }
  return s;
}

EncodingMatrix SyntheticOracle::encode(const QueryContext& ctx, const Ranking& sigma) const {
  if (ctx.candidate_count != config_.candidates) {
    throw DimensionError("synthetic oracle: query K=" + std::to_string(ctx.candidate_count) +
                         " but oracle K=" + std::to_string(config_.candidates));
  }
  return encode_with(params_for(ctx), sigma);
}

}  // namespace rsd
