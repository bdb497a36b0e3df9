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

#include "rsd/policy.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

#include "rsd/errors.hpp"

namespace rsd {
namespace {

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

using Vec = Eigen::VectorXd;
using GradMap = Eigen::Map<RowMatrix>;

double gelu(double x) { return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x))); }

double gelu_grad(double x) {
  const double t = std::tanh(kGeluC * (x + kGeluA * x * x * x));
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
}

// Row-wise layer norm; returns gain * xhat + bias.
RowMatrix layer_norm(const RowMatrix& x, Eigen::Map<const RowMatrix> gain, Eigen::Map<const RowMatrix> bias,
                     double eps, RowMatrix& xhat, Vec& rstd) {
  const Eigen::Index n = x.rows();
  const double d = static_cast<double>(x.cols());
  xhat.resize(n, x.cols());
  rstd.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mean = x.row(i).sum() / d;
    const double var = (x.row(i).array() - mean).square().sum() / d;
    rstd(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (x.row(i).array() - mean) * rstd(i);
  }
  RowMatrix out = xhat;
  for (Eigen::Index i = 0; i < n; ++i) {
    out.row(i) = xhat.row(i).cwiseProduct(gain.row(0)) + bias.row(0);
  }
  return out;
}

RowMatrix layer_norm_backward(const RowMatrix& dout, const RowMatrix& xhat, const Vec& rstd,
                              Eigen::Map<const RowMatrix> gain, GradMap dgain, GradMap dbias) {
  const double d = static_cast<double>(xhat.cols());
  dgain.row(0) += dout.cwiseProduct(xhat).colwise().sum();
  dbias.row(0) += dout.colwise().sum();
  RowMatrix dx(xhat.rows(), xhat.cols());
  for (Eigen::Index i = 0; i < xhat.rows(); ++i) {
    const Eigen::RowVectorXd dxhat = dout.row(i).cwiseProduct(gain.row(0));
    const double m1 = dxhat.sum() / d;
    const double m2 = dxhat.dot(xhat.row(i)) / d;
    dx.row(i) = rstd(i) * (dxhat.array() - m1 - xhat.row(i).array() * m2);
  }
  return dx;
}

// x W^T + b for a (out x in) weight and a (1 x out) bias.
RowMatrix affine(const RowMatrix& x, Eigen::Map<const RowMatrix> w, Eigen::Map<const RowMatrix> b) {
  RowMatrix out = x * w.transpose();
  out.rowwise() += b.row(0);
  return out;
}

// Accumulates weight/bias gradients of an affine map; returns d(input).
RowMatrix affine_backward(const RowMatrix& dout, const RowMatrix& x, Eigen::Map<const RowMatrix> w, GradMap dw,
                          GradMap db) {
  dw.noalias() += dout.transpose() * x;
  db.row(0) += dout.colwise().sum();
  return dout * w;
}

void softmax_inplace(std::span<double> v) {
  const double m = *std::max_element(v.begin(), v.end());
  double total = 0.0;
  for (double& x : v) {
    x = std::exp(x - m);
    total += x;
  }
  for (double& x : v) x /= total;
}

void check_history(const PolicyConfig& cfg, const EncodingHistory& history) {
  if (history.empty()) throw std::invalid_argument("relevance_forward: empty history");
  if (static_cast<int>(history.size()) > cfg.max_rounds) {
    throw CapacityError("relevance_forward: history of " + std::to_string(history.size()) +
                        " rounds exceeds capacity " + std::to_string(cfg.max_rounds));
  }
  for (const auto& round : history) {
    if (round.encoding.size() != cfg.candidates || round.ranking.size() != cfg.candidates) {
      throw DimensionError("relevance_forward: history entry does not have K = " + std::to_string(cfg.candidates));
    }
  }
}

double feature(const PolicyConfig& cfg, double p) { return cfg.log_features ? std::log(p + 1e-6) : p; }

int rejection_row(const EncodedRound& round) {
  const int k = round.ranking.size();
  return std::min(longest_consistent_prefix(round.ranking, round.encoding) + 1, k - 1);
}

std::vector<ParamBlock> layout(const PolicyConfig& c) {
  std::vector<ParamBlock> blocks;
  size_t offset = 0;
  auto add = [&](std::string name, int rows, int cols, ParamBlock::Init init, int fan_in = 0) {
    ParamBlock b{std::move(name), offset, rows, cols, fan_in, init};
    offset += b.size();
    blocks.push_back(std::move(b));
  };
  using I = ParamBlock::Init;
  const int k = c.candidates, d = c.d_model, f = c.ffn_hidden;
  if (c.arch == PolicyArch::kMlp) {
    add("mlp_w1", f, k, I::kLinear, k);
    add("mlp_b1", 1, f, I::kZero);
    add("mlp_w2", k, f, I::kLinear, f);
    add("mlp_b2", 1, k, I::kZero);
    return blocks;
  }
  add("tok_w", d, k, I::kLinear, k);
  add("tok_b", 1, d, I::kZero);
  add("round_embed", c.max_rounds, d, I::kEmbedding);
  add("pos_embed", k, d, I::kEmbedding);
  if (c.mark_rejection) add("reject_embed", 1, d, I::kEmbedding);
  add("ln1_g", 1, d, I::kOne);
  add("ln1_b", 1, d, I::kZero);
  for (const char* name : {"wq", "wk", "wv"}) {
    add(name, d, d, I::kLinear, d);
    add(std::string("b") + name[1], 1, d, I::kZero);
  }
  add("wo", d, d, I::kLinear, d);
  add("bo", 1, d, I::kZero);
  add("ln2_g", 1, d, I::kOne);
  add("ln2_b", 1, d, I::kZero);
  add("w1", f, d, I::kLinear, d);
  add("b1", 1, f, I::kZero);
  add("w2", d, f, I::kLinear, f);
  add("b2", 1, d, I::kZero);
  add("lnf_g", 1, d, I::kOne);
  add("lnf_b", 1, d, I::kZero);
  add("out_w", k, d, I::kLinear, d);
  add("out_b", 1, k, I::kZero);
  return blocks;
}

GradMap grad_block(const PolicyParams& params, PolicyGradient& grad, const std::string& name) {
  const ParamBlock& b = params.block(name);
  return {grad.values.data() + b.offset, b.rows, b.cols};
}

PolicyOutput finish(std::vector<double> logits) {
  PolicyOutput out;
  out.scores = softmax(logits);
  out.logits = std::move(logits);
  return out;
}

}  // namespace

PolicyConfig PolicyConfig::resolved() const {
  PolicyConfig c = *this;
  if (c.candidates < 2) throw std::invalid_argument("PolicyConfig: need at least 2 candidates");
  if (c.n_heads < 1) throw std::invalid_argument("PolicyConfig: n_heads must be positive");
  if (c.max_rounds < 1) throw std::invalid_argument("PolicyConfig: max_rounds must be positive");
  if (c.d_model == 0) c.d_model = (c.candidates + c.n_heads - 1) / c.n_heads * c.n_heads;
  if (c.ffn_hidden == 0) c.ffn_hidden = 4 * c.d_model;
  if (c.d_model < 1 || c.d_model % c.n_heads != 0) {
    throw std::invalid_argument("PolicyConfig: d_model must be a positive multiple of n_heads");
  }
  if (c.ffn_hidden < 1) throw std::invalid_argument("PolicyConfig: ffn_hidden must be positive");
  if (!(c.ln_eps > 0.0)) throw std::invalid_argument("PolicyConfig: ln_eps must be positive");
  return c;
}

PolicyParams::PolicyParams(const PolicyConfig& config) : config_(config.resolved()), blocks_(layout(config_)) {
  const auto& last = blocks_.back();
  values_.assign(last.offset + last.size(), 0.0);
  for (const auto& b : blocks_) {
    if (b.init == ParamBlock::Init::kOne) std::fill_n(values_.begin() + static_cast<std::ptrdiff_t>(b.offset), b.size(), 1.0);
  }
}

PolicyParams PolicyParams::initialized(const PolicyConfig& config, std::uint64_t seed) {
  PolicyParams p(config);
  Rng rng(seed);
  for (const auto& b : p.blocks_) {
    double* v = p.values_.data() + b.offset;
    if (b.init == ParamBlock::Init::kLinear) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(b.fan_in));
      std::uniform_real_distribution<double> u(-bound, bound);
      for (size_t i = 0; i < b.size(); ++i) v[i] = u(rng);
    } else if (b.init == ParamBlock::Init::kEmbedding) {
      std::normal_distribution<double> n(0.0, 0.02);
      for (size_t i = 0; i < b.size(); ++i) v[i] = n(rng);
    }
  }
  return p;
}

const ParamBlock& PolicyParams::block(const std::string& name) const {
  for (const auto& b : blocks_) {
    if (b.name == name) return b;
  }
  throw std::out_of_range("PolicyParams: no parameter block '" + name + "'");
}

Eigen::Map<RowMatrix> PolicyParams::matrix(const std::string& name) {
  const ParamBlock& b = block(name);
  return {values_.data() + b.offset, b.rows, b.cols};
}

Eigen::Map<const RowMatrix> PolicyParams::matrix(const std::string& name) const {
  const ParamBlock& b = block(name);
  return {values_.data() + b.offset, b.rows, b.cols};
}

bool PolicyParams::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

double PolicyGradient::norm() const {
  double s = 0.0;
  for (double v : values) s += v * v;
  return std::sqrt(s);
}

bool PolicyGradient::all_finite() const {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

void PolicyGradient::scale(double factor) {
  for (double& v : values) v *= factor;
}

void PolicyGradient::add(const PolicyGradient& other, double factor) {
  if (other.values.size() != values.size()) throw DimensionError("PolicyGradient::add: size mismatch");
  for (size_t i = 0; i < values.size(); ++i) values[i] += factor * other.values[i];
}

PolicyOutput relevance_forward(const PolicyParams& params, const EncodingHistory& history, ForwardTape* tape) {
  const PolicyConfig& cfg = params.config();
  if (cfg.arch == PolicyArch::kMlp) return relevance_forward_mlp(params, history, tape);
  check_history(cfg, history);

  const int k = cfg.candidates, d = cfg.d_model, heads = cfg.n_heads, dh = d / heads;
  const int rounds = static_cast<int>(history.size());
  const int n = rounds * k;

  ForwardTape local;
  ForwardTape& t = tape ? *tape : local;
  t = ForwardTape{};
  t.arch = cfg.arch;
  t.param_count = params.size();
  t.rounds = rounds;
  t.tokens = n;
  t.x.resize(n, k);
  t.round_index.resize(static_cast<size_t>(n));
  t.pos_index.resize(static_cast<size_t>(n));
  for (int r = 0; r < rounds; ++r) {
    const auto& s = history[static_cast<size_t>(r)].encoding;
    for (int m = 0; m < k; ++m) {
      const int row = r * k + m;
      for (int j = 0; j < k; ++j) t.x(row, j) = feature(cfg, s.at(m, j));
      t.round_index[static_cast<size_t>(row)] = rounds - 1 - r;
      t.pos_index[static_cast<size_t>(row)] = m;
    }
    if (cfg.mark_rejection) t.marked.push_back(r * k + rejection_row(history[static_cast<size_t>(r)]));
  }

  t.e = affine(t.x, params.matrix("tok_w"), params.matrix("tok_b"));
  const auto round_embed = params.matrix("round_embed");
  const auto pos_embed = params.matrix("pos_embed");
  for (int i = 0; i < n; ++i) {
    t.e.row(i) += round_embed.row(t.round_index[static_cast<size_t>(i)]) + pos_embed.row(t.pos_index[static_cast<size_t>(i)]);
  }
  if (cfg.mark_rejection) {
    const auto reject = params.matrix("reject_embed");
    for (int row : t.marked) t.e.row(row) += reject.row(0);
  }

  t.a1 = layer_norm(t.e, params.matrix("ln1_g"), params.matrix("ln1_b"), cfg.ln_eps, t.xhat1, t.rstd1);
  t.q = affine(t.a1, params.matrix("wq"), params.matrix("bq"));
  t.k = affine(t.a1, params.matrix("wk"), params.matrix("bk"));
  t.v = affine(t.a1, params.matrix("wv"), params.matrix("bv"));
  t.o.resize(n, d);
  t.attn.resize(static_cast<size_t>(heads));
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  for (int h = 0; h < heads; ++h) {
    RowMatrix logits = t.q.middleCols(h * dh, dh) * t.k.middleCols(h * dh, dh).transpose() * scale;
    for (int i = 0; i < n; ++i) {
      softmax_inplace(std::span<double>(logits.data() + static_cast<std::ptrdiff_t>(i) * n, static_cast<size_t>(n)));
    }
    t.o.middleCols(h * dh, dh) = logits * t.v.middleCols(h * dh, dh);
    t.attn[static_cast<size_t>(h)] = std::move(logits);
  }
  t.h1 = t.e + affine(t.o, params.matrix("wo"), params.matrix("bo"));

  t.a2 = layer_norm(t.h1, params.matrix("ln2_g"), params.matrix("ln2_b"), cfg.ln_eps, t.xhat2, t.rstd2);
  t.f1 = affine(t.a2, params.matrix("w1"), params.matrix("b1"));
  t.g = t.f1.unaryExpr([](double x) { return gelu(x); });
  t.h2 = t.h1 + affine(t.g, params.matrix("w2"), params.matrix("b2"));

  t.a3 = layer_norm(t.h2, params.matrix("lnf_g"), params.matrix("lnf_b"), cfg.ln_eps, t.xhat3, t.rstd3);
  t.z = affine(t.a3, params.matrix("out_w"), params.matrix("out_b"));

  std::vector<double> logits(static_cast<size_t>(k), 0.0);
  const Eigen::RowVectorXd mean = t.z.bottomRows(k).colwise().mean();
  for (int j = 0; j < k; ++j) logits[static_cast<size_t>(j)] = mean(j);
  t.logits = logits;
  return finish(std::move(logits));
}

PolicyOutput relevance_forward_mlp(const PolicyParams& params, const EncodingHistory& history, ForwardTape* tape) {
  const PolicyConfig& cfg = params.config();
  if (cfg.arch != PolicyArch::kMlp) throw std::invalid_argument("relevance_forward_mlp: params are not an MLP head");
  check_history(cfg, history);
  const int k = cfg.candidates;

  ForwardTape local;
  ForwardTape& t = tape ? *tape : local;
  t = ForwardTape{};
  t.arch = cfg.arch;
  t.param_count = params.size();
  t.rounds = static_cast<int>(history.size());
  t.tokens = 1;
  const auto row = history.back().encoding.row(rejection_row(history.back()));
  t.mlp_in.resize(k);
  for (int j = 0; j < k; ++j) t.mlp_in(j) = feature(cfg, row[static_cast<size_t>(j)]);
  t.mlp_pre = params.matrix("mlp_w1") * t.mlp_in + params.matrix("mlp_b1").row(0).transpose();
  t.mlp_hidden = t.mlp_pre.unaryExpr([](double x) { return gelu(x); });
  const Vec out = params.matrix("mlp_w2") * t.mlp_hidden + params.matrix("mlp_b2").row(0).transpose();
  std::vector<double> logits(out.data(), out.data() + k);
  t.logits = logits;
  return finish(std::move(logits));
}

void policy_backward(const PolicyParams& params, const ForwardTape& tape, std::span<const double> dlogits,
                     PolicyGradient& grad) {
  const PolicyConfig& cfg = params.config();
  const int k = cfg.candidates;
  if (tape.param_count != params.size() || tape.arch != cfg.arch) {
    throw DimensionError("policy_backward: tape was not produced by these parameters");
  }
  if (grad.values.size() != params.size()) throw DimensionError("policy_backward: gradient size mismatch");
  if (static_cast<int>(dlogits.size()) != k) throw DimensionError("policy_backward: upstream has wrong length");
  const Eigen::Map<const Eigen::RowVectorXd> dl(dlogits.data(), k);

  if (cfg.arch == PolicyArch::kMlp) {
    grad_block(params, grad, "mlp_w2").noalias() += dl.transpose() * tape.mlp_hidden.transpose();
    grad_block(params, grad, "mlp_b2").row(0) += dl;
    Vec dpre = params.matrix("mlp_w2").transpose() * dl.transpose();
    for (Eigen::Index i = 0; i < dpre.size(); ++i) dpre(i) *= gelu_grad(tape.mlp_pre(i));
    grad_block(params, grad, "mlp_w1").noalias() += dpre * tape.mlp_in.transpose();
    grad_block(params, grad, "mlp_b1").row(0) += dpre.transpose();
    return;
  }

  const int d = cfg.d_model, heads = cfg.n_heads, dh = d / heads, n = tape.tokens;
  RowMatrix dz = RowMatrix::Zero(n, k);
  for (int i = n - k; i < n; ++i) dz.row(i) = dl / static_cast<double>(k);

  RowMatrix da3 = affine_backward(dz, tape.a3, params.matrix("out_w"), grad_block(params, grad, "out_w"),
                                  grad_block(params, grad, "out_b"));
  RowMatrix dh2 = layer_norm_backward(da3, tape.xhat3, tape.rstd3, params.matrix("lnf_g"),
                                      grad_block(params, grad, "lnf_g"), grad_block(params, grad, "lnf_b"));

  RowMatrix dh1 = dh2;
  RowMatrix dg = affine_backward(dh2, tape.g, params.matrix("w2"), grad_block(params, grad, "w2"),
                                 grad_block(params, grad, "b2"));
  RowMatrix df1 = dg.cwiseProduct(tape.f1.unaryExpr([](double x) { return gelu_grad(x); }));
  RowMatrix da2 = affine_backward(df1, tape.a2, params.matrix("w1"), grad_block(params, grad, "w1"),
                                  grad_block(params, grad, "b1"));
  dh1 += layer_norm_backward(da2, tape.xhat2, tape.rstd2, params.matrix("ln2_g"), grad_block(params, grad, "ln2_g"),
                             grad_block(params, grad, "ln2_b"));

  RowMatrix de = dh1;
  RowMatrix dout = affine_backward(dh1, tape.o, params.matrix("wo"), grad_block(params, grad, "wo"),
                                   grad_block(params, grad, "bo"));
  RowMatrix dq(n, d), dk(n, d), dv(n, d);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  for (int h = 0; h < heads; ++h) {
    const RowMatrix& p = tape.attn[static_cast<size_t>(h)];
    const RowMatrix doh = dout.middleCols(h * dh, dh);
    const RowMatrix dp = doh * tape.v.middleCols(h * dh, dh).transpose();
    dv.middleCols(h * dh, dh) = p.transpose() * doh;
    RowMatrix ds = p.cwiseProduct(dp);
    const Vec row_dot = ds.rowwise().sum();
    ds -= p.cwiseProduct(row_dot.replicate(1, n));
    dq.middleCols(h * dh, dh) = ds * tape.k.middleCols(h * dh, dh) * scale;
    dk.middleCols(h * dh, dh) = ds.transpose() * tape.q.middleCols(h * dh, dh) * scale;
  }
  RowMatrix da1 = affine_backward(dq, tape.a1, params.matrix("wq"), grad_block(params, grad, "wq"),
                                  grad_block(params, grad, "bq"));
  da1 += affine_backward(dk, tape.a1, params.matrix("wk"), grad_block(params, grad, "wk"),
                         grad_block(params, grad, "bk"));
  da1 += affine_backward(dv, tape.a1, params.matrix("wv"), grad_block(params, grad, "wv"),
                         grad_block(params, grad, "bv"));
  de += layer_norm_backward(da1, tape.xhat1, tape.rstd1, params.matrix("ln1_g"), grad_block(params, grad, "ln1_g"),
                            grad_block(params, grad, "ln1_b"));

  affine_backward(de, tape.x, params.matrix("tok_w"), grad_block(params, grad, "tok_w"),
                  grad_block(params, grad, "tok_b"));
  GradMap droundm = grad_block(params, grad, "round_embed");
  GradMap dpos = grad_block(params, grad, "pos_embed");
  for (int i = 0; i < n; ++i) {
    droundm.row(tape.round_index[static_cast<size_t>(i)]) += de.row(i);
    dpos.row(tape.pos_index[static_cast<size_t>(i)]) += de.row(i);
  }
  if (cfg.mark_rejection) {
    GradMap dreject = grad_block(params, grad, "reject_embed");
    for (int row : tape.marked) dreject.row(0) += de.row(row);
  }
}

void policy_backward_from_scores(const PolicyParams& params, const ForwardTape& tape,
                                 std::span<const double> dscores, PolicyGradient& grad) {
  if (dscores.size() != tape.logits.size()) throw DimensionError("policy_backward: upstream has wrong length");
  const std::vector<double> p = softmax(tape.logits);
  double dot = 0.0;
  for (size_t i = 0; i < p.size(); ++i) dot += p[i] * dscores[i];
  std::vector<double> dl(p.size());
  for (size_t i = 0; i < p.size(); ++i) dl[i] = p[i] * (dscores[i] - dot);
  policy_backward(params, tape, dl, grad);
}

double log_sigmoid(double x) { return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); }

namespace {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void check_scores(std::span<const double> scores, const Ranking& sigma, const char* what) {
  if (static_cast<int>(scores.size()) != sigma.size()) {
    throw DimensionError(std::string(what) + ": scores and ranking differ in length");
  }
}

}  // namespace

double bt_log_prob(std::span<const double> scores, const Ranking& sigma) {
  check_scores(scores, sigma, "bt_log_prob");
  const int k = sigma.size();
  double total = 0.0;
  for (int p = 0; p < k; ++p) {
    const double hp = scores[static_cast<size_t>(sigma[p])];
    for (int q = p + 1; q < k; ++q) total += log_sigmoid(hp - scores[static_cast<size_t>(sigma[q])]);
  }
  return total;
}

std::vector<double> bt_log_prob_grad(std::span<const double> scores, const Ranking& sigma) {
  check_scores(scores, sigma, "bt_log_prob_grad");
  const int k = sigma.size();
  std::vector<double> g(scores.size(), 0.0);
  for (int p = 0; p < k; ++p) {
    const int a = sigma[p];
    for (int q = p + 1; q < k; ++q) {
      const int b = sigma[q];
      const double w = 1.0 - sigmoid(scores[static_cast<size_t>(a)] - scores[static_cast<size_t>(b)]);
      g[static_cast<size_t>(a)] += w;
      g[static_cast<size_t>(b)] -= w;
    }
  }
  return g;
}

double pl_log_prob(std::span<const double> scores, const Ranking& sigma, int first_position) {
  check_scores(scores, sigma, "pl_log_prob");
  const int k = sigma.size();
  double total = 0.0;
  for (int p = first_position; p < k; ++p) {
    double m = -std::numeric_limits<double>::infinity();
    for (int q = p; q < k; ++q) m = std::max(m, scores[static_cast<size_t>(sigma[q])]);
    double z = 0.0;
    for (int q = p; q < k; ++q) z += std::exp(scores[static_cast<size_t>(sigma[q])] - m);
    total += scores[static_cast<size_t>(sigma[p])] - m - std::log(z);
  }
  return total;
}

std::vector<double> pl_log_prob_grad(std::span<const double> scores, const Ranking& sigma, int first_position) {
  check_scores(scores, sigma, "pl_log_prob_grad");
  const int k = sigma.size();
  std::vector<double> g(scores.size(), 0.0);
  for (int p = first_position; p < k; ++p) {
    double m = -std::numeric_limits<double>::infinity();
    for (int q = p; q < k; ++q) m = std::max(m, scores[static_cast<size_t>(sigma[q])]);
    double z = 0.0;
    for (int q = p; q < k; ++q) z += std::exp(scores[static_cast<size_t>(sigma[q])] - m);
    g[static_cast<size_t>(sigma[p])] += 1.0;
    for (int q = p; q < k; ++q) g[static_cast<size_t>(sigma[q])] -= std::exp(scores[static_cast<size_t>(sigma[q])] - m) / z;
  }
  return g;
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.begin(), logits.end());
  softmax_inplace(p);
  return p;
}

double kl_from_logits(std::span<const double> logits_p, std::span<const double> logits_q) {
  if (logits_p.size() != logits_q.size()) throw DimensionError("kl_from_logits: length mismatch");
  const auto p = softmax(logits_p);
  const auto lp = [&] {
    std::vector<double> v(logits_p.begin(), logits_p.end());
    const double m = *std::max_element(v.begin(), v.end());
    double z = 0.0;
    for (double x : v) z += std::exp(x - m);
    for (double& x : v) x -= m + std::log(z);
    return v;
  }();
  std::vector<double> lq(logits_q.begin(), logits_q.end());
  const double mq = *std::max_element(lq.begin(), lq.end());
  double zq = 0.0;
  for (double x : lq) zq += std::exp(x - mq);
  for (double& x : lq) x -= mq + std::log(zq);
  double kl = 0.0;
  for (size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) kl += p[i] * (lp[i] - lq[i]);
  }
  return std::max(kl, 0.0);
}

std::vector<double> kl_from_logits_grad(std::span<const double> logits_p, std::span<const double> logits_q) {
  if (logits_p.size() != logits_q.size()) throw DimensionError("kl_from_logits_grad: length mismatch");
  const auto p = softmax(logits_p);
  std::vector<double> g(p.size());
  double kl = 0.0;
  std::vector<double> diff(p.size());
  const double mp = *std::max_element(logits_p.begin(), logits_p.end());
  const double mq = *std::max_element(logits_q.begin(), logits_q.end());
  double zp = 0.0, zq = 0.0;
  for (size_t i = 0; i < p.size(); ++i) {
    zp += std::exp(logits_p[i] - mp);
    zq += std::exp(logits_q[i] - mq);
  }
  for (size_t i = 0; i < p.size(); ++i) {
    diff[i] = (logits_p[i] - mp - std::log(zp)) - (logits_q[i] - mq - std::log(zq));
    kl += p[i] * diff[i];
  }
  for (size_t i = 0; i < p.size(); ++i) g[i] = p[i] * (diff[i] - kl);
  return g;
}

namespace {

std::vector<int> remaining_items(size_t k, std::span<const int> fixed_prefix) {
  std::vector<bool> taken(k, false);
  for (int item : fixed_prefix) {
    if (item < 0 || static_cast<size_t>(item) >= k || taken[static_cast<size_t>(item)]) {
      throw std::invalid_argument("tail completion: prefix items must be distinct candidates");
    }
    taken[static_cast<size_t>(item)] = true;
  }
  std::vector<int> rest;
  for (size_t j = 0; j < k; ++j) {
    if (!taken[j]) rest.push_back(static_cast<int>(j));
  }
  return rest;
}

Ranking complete(std::span<const int> fixed_prefix, std::span<const double> keys, std::vector<int> rest) {
  std::stable_sort(rest.begin(), rest.end(), [&](int a, int b) {
    return keys[static_cast<size_t>(a)] > keys[static_cast<size_t>(b)];
  });
  std::vector<int> order(fixed_prefix.begin(), fixed_prefix.end());
  order.insert(order.end(), rest.begin(), rest.end());
  return Ranking(std::move(order));
}

}  // namespace

Ranking sample_tail(std::span<const double> scores, std::span<const int> fixed_prefix, Rng& rng) {
  std::vector<int> rest = remaining_items(scores.size(), fixed_prefix);
  std::vector<double> keys(scores.size(), 0.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int j : rest) {
    double x = u(rng);
    while (x <= 0.0) x = u(rng);
    keys[static_cast<size_t>(j)] = scores[static_cast<size_t>(j)] - std::log(-std::log(x));
  }
  return complete(fixed_prefix, keys, std::move(rest));
}

Ranking greedy_tail(std::span<const double> scores, std::span<const int> fixed_prefix) {
  return complete(fixed_prefix, scores, remaining_items(scores.size(), fixed_prefix));
}

namespace {

constexpr std::array<char, 8> kMagic = {'R', 'S', 'D', 'P', 'O', 'L', 'C', 'Y'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void put(std::ostream& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  U bits;
  std::memcpy(&bits, &value, sizeof(T));
  for (size_t i = 0; i < sizeof(T); ++i) out.put(static_cast<char>((bits >> (8 * i)) & 0xff));
}

template <typename T>
T get(std::istream& in) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  U bits = 0;
  for (size_t i = 0; i < sizeof(T); ++i) {
    const int c = in.get();
    if (c == std::char_traits<char>::eof()) throw std::runtime_error("checkpoint: truncated file");
    bits |= static_cast<U>(static_cast<unsigned char>(c)) << (8 * i);
  }
  T value;
  std::memcpy(&value, &bits, sizeof(T));
  return value;
}

}  // namespace

void save_checkpoint(const PolicyParams& params, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path.string());
  const PolicyConfig& c = params.config();
  out.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(out, kCheckpointVersion);
  for (std::int32_t v : {c.candidates, c.d_model, c.n_heads, c.max_rounds, static_cast<int>(c.arch), c.ffn_hidden,
                         static_cast<int>(c.mark_rejection), static_cast<int>(c.log_features)}) {
    put<std::int32_t>(out, v);
  }
  put<std::uint64_t>(out, params.size());
  for (double v : params.values()) put<double>(out, v);
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path.string());
}

PolicyParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot read " + path.string());
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw std::runtime_error("checkpoint: bad magic in " + path.string());
  const auto version = get<std::uint32_t>(in);
  if (version != kCheckpointVersion) throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  PolicyConfig c;
  c.candidates = get<std::int32_t>(in);
  c.d_model = get<std::int32_t>(in);
  c.n_heads = get<std::int32_t>(in);
  c.max_rounds = get<std::int32_t>(in);
  const int arch = get<std::int32_t>(in);
  if (arch != 0 && arch != 1) throw std::runtime_error("checkpoint: unknown architecture");
  c.arch = static_cast<PolicyArch>(arch);
  c.ffn_hidden = get<std::int32_t>(in);
  c.mark_rejection = get<std::int32_t>(in) != 0;
  c.log_features = get<std::int32_t>(in) != 0;
  PolicyParams params(c);
  const auto count = get<std::uint64_t>(in);
  if (count != params.size()) throw DimensionError("checkpoint: parameter count does not match header");
  for (double& v : params.values()) v = get<double>(in);
  return params;
}

}  // namespace rsd
