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
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rsd/oracle.hpp"
#include "rsd/ranking.hpp"

namespace rsd {

using Rng = std::mt19937_64;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// One verified round of an episode: the ranking that was encoded and its
// encoding.
struct EncodedRound {
  Ranking ranking;
  EncodingMatrix encoding;
};

// Cached encodings of the rankings seen so far, oldest first.
using EncodingHistory = std::vector<EncodedRound>;

enum class PolicyArch {
  kTransformer,  // attention over every row of every encoding in the history
  kMlp,          // two-layer MLP over the rejection row only
};

struct PolicyConfig {
  int candidates = 20;
  int d_model = 0;     // 0: K rounded up to a multiple of n_heads
  int n_heads = 5;
  int ffn_hidden = 0;  // 0: 4 * d_model
  int max_rounds = 5;
  PolicyArch arch = PolicyArch::kTransformer;
  double ln_eps = 1e-5;
  // Adds a learned embedding to the token at each round's rejection row
  // (position i*+1), so the block can locate the verified boundary.
  bool mark_rejection = true;
  // Feeds log(p + 1e-6) instead of p for every encoding entry.
  bool log_features = true;

  // Fills the derived defaults and validates; throws std::invalid_argument.
  PolicyConfig resolved() const;
};

// A named slice of the flat parameter vector.
struct ParamBlock {
  enum class Init { kLinear, kZero, kOne, kEmbedding };
  std::string name;
  size_t offset = 0;
  int rows = 0;
  int cols = 0;
  int fan_in = 0;
  Init init = Init::kZero;

  size_t size() const { return static_cast<size_t>(rows) * static_cast<size_t>(cols); }
};

// Weights of the relevance network, stored as one flat vector so that
// optimizers, checkpoints and gradient checks can treat them uniformly.
class PolicyParams {
 public:
  // All parameters zero except layer-norm gains (one).
  explicit PolicyParams(const PolicyConfig& config);
  // Linear maps U(+-1/sqrt(fan_in)), embeddings N(0, 0.02^2), biases zero.
  static PolicyParams initialized(const PolicyConfig& config, std::uint64_t seed);

  const PolicyConfig& config() const { return config_; }
  const std::vector<ParamBlock>& blocks() const { return blocks_; }
  const ParamBlock& block(const std::string& name) const;

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }
  size_t size() const { return values_.size(); }

  Eigen::Map<RowMatrix> matrix(const std::string& name);
  Eigen::Map<const RowMatrix> matrix(const std::string& name) const;

  bool all_finite() const;

 private:
  PolicyConfig config_;
  std::vector<ParamBlock> blocks_;
  std::vector<double> values_;
};

// Accumulated derivative of an objective w.r.t. every parameter; same layout
// as the PolicyParams it was produced for.
struct PolicyGradient {
  std::vector<double> values;

  static PolicyGradient zeros_like(const PolicyParams& params) { return {std::vector<double>(params.size(), 0.0)}; }
  double norm() const;
  bool all_finite() const;
  void scale(double factor);
  void add(const PolicyGradient& other, double factor = 1.0);
};

// Activations cached by a forward pass for the matching backward pass.
struct ForwardTape {
  PolicyArch arch = PolicyArch::kTransformer;
  size_t param_count = 0;
  int rounds = 0;
  int tokens = 0;
  RowMatrix x;                           // tokens x K
  std::vector<int> round_index, pos_index, marked;
  RowMatrix e, xhat1, a1, q, k, v, o, h1;
  Eigen::VectorXd rstd1, rstd2, rstd3;
  std::vector<RowMatrix> attn;           // per head, tokens x tokens
  RowMatrix xhat2, a2, f1, g, h2, xhat3, a3, z;
  // MLP ablation
  Eigen::VectorXd mlp_in, mlp_pre, mlp_hidden;
  std::vector<double> logits;
};

struct PolicyOutput {
  std::vector<double> logits;  // pre-softmax relevance scores (used by BT and the sampler)
  std::vector<double> scores;  // softmax(logits), sums to one
};

// Relevance scores for the next ranking given the encoding history. The
// transformer embeds every row of every encoding as a token, runs one
// pre-norm attention + feed-forward block, projects back to K, mean-pools
// the newest round's tokens and softmaxes. Throws CapacityError when the
// history exceeds max_rounds and DimensionError on shape mismatch.
PolicyOutput relevance_forward(const PolicyParams& params, const EncodingHistory& history,
                               ForwardTape* tape = nullptr);

// Ablation head: MLP over row i*+1 of the newest encoding.
PolicyOutput relevance_forward_mlp(const PolicyParams& params, const EncodingHistory& history,
                                   ForwardTape* tape = nullptr);

// Reverse-mode pass. Adds d(objective)/d(params) into `grad` given the
// derivative of the objective w.r.t. the logits.
void policy_backward(const PolicyParams& params, const ForwardTape& tape, std::span<const double> dlogits,
                     PolicyGradient& grad);

// Same, starting from the derivative w.r.t. the softmax scores.
void policy_backward_from_scores(const PolicyParams& params, const ForwardTape& tape,
                                 std::span<const double> dscores, PolicyGradient& grad);

// Bradley-Terry log-probability of sigma: sum over every ordered pair
// (sigma[p] before sigma[q]) of log sigmoid(s[sigma[p]] - s[sigma[q]]).
double bt_log_prob(std::span<const double> scores, const Ranking& sigma);
std::vector<double> bt_log_prob_grad(std::span<const double> scores, const Ranking& sigma);

// Plackett-Luce log-probability of sigma[first_position:] given the prefix:
// the law of the Gumbel-argsort sampler.
double pl_log_prob(std::span<const double> scores, const Ranking& sigma, int first_position = 0);
std::vector<double> pl_log_prob_grad(std::span<const double> scores, const Ranking& sigma, int first_position = 0);

// KL(softmax(logits_p) || softmax(logits_q)) and its gradient w.r.t. logits_p.
double kl_from_logits(std::span<const double> logits_p, std::span<const double> logits_q);
std::vector<double> kl_from_logits_grad(std::span<const double> logits_p, std::span<const double> logits_q);

std::vector<double> softmax(std::span<const double> logits);
double log_sigmoid(double x);

// Completes fixed_prefix by a Gumbel-perturbed descending sort of the
// remaining items' scores.
Ranking sample_tail(std::span<const double> scores, std::span<const int> fixed_prefix, Rng& rng);
// Completes fixed_prefix with the remaining items by descending score,
// lower index first on ties.
Ranking greedy_tail(std::span<const double> scores, std::span<const int> fixed_prefix);

// Checkpoint: "RSDPOLCY" magic, u32 version, i32 K, d_model, n_heads,
// max_rounds, arch, ffn_hidden, mark_rejection, log_features, u64 count, then count little-endian doubles.
void save_checkpoint(const PolicyParams& params, const std::filesystem::path& path);
PolicyParams load_checkpoint(const std::filesystem::path& path);

}  // namespace rsd
