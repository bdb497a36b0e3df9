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
#include <optional>
#include <vector>

#include "rsd/oracle.hpp"

namespace rsd {

// Explicit parameters of one synthetic target ranker. The next-item score of
// candidate j after prefix P is base_scores[j] + sum_{p in P} W[p][j],
// softmaxed over unplaced candidates at `temperature`.
struct SyntheticOracleParams {
  std::vector<double> base_scores;  // K
  std::vector<double> interaction;  // K x K row-major, W[p * K + j]
  double temperature = 1.0;

  int candidates() const { return static_cast<int>(base_scores.size()); }
  double coupling(int placed, int candidate) const {
    return interaction[static_cast<size_t>(placed) * base_scores.size() + static_cast<size_t>(candidate)];
  }
};

// Generator for per-query parameters.
//   base_scores[j]  ~ base_scale * N(0,1)              (per query)
//   W[p][j]         = drift[j] + pair_scale * N(0,1)   (per query noise)
//   drift[j]        ~ drift_scale * N(0,1)             (shared across queries, from world_seed)
// The shared drift models a slot-level bias of the ranker that grows with
// the prefix length.
struct SyntheticOracleConfig {
  int candidates = 20;
  double base_scale = 1.0;
  double drift_scale = 0.3;
  double pair_scale = 0.3;
  double temperature = 1.0;
  std::uint64_t world_seed = 0;
};

class SyntheticOracle final : public Oracle {
 public:
  explicit SyntheticOracle(SyntheticOracleConfig config);
  // Same parameters for every query (tests, worked examples).
  explicit SyntheticOracle(SyntheticOracleParams fixed);

  SyntheticOracleParams params_for(const QueryContext& ctx) const;
  EncodingMatrix encode(const QueryContext& ctx, const Ranking& sigma) const override;

  const SyntheticOracleConfig& config() const { return config_; }

  // Encoding with explicit parameters.
  static EncodingMatrix encode_with(const SyntheticOracleParams& params, const Ranking& sigma);

 private:
  SyntheticOracleConfig config_;
  std::vector<double> drift_;
  std::optional<SyntheticOracleParams> fixed_;
};

// Stable 64-bit mix of a query's seed and id.
std::uint64_t query_stream_seed(std::uint64_t seed, const std::string& query_id);

}  // namespace rsd
