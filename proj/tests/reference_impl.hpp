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

// Straight-line re-implementations used as test oracles. None of this code
// calls into the library except for plain data types.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "rsd/oracle.hpp"
#include "rsd/ranking.hpp"
#include "rsd/synthetic_oracle.hpp"

namespace ref {

inline std::vector<int> positions(const std::vector<int>& order) {
  std::vector<int> pos(order.size());
  for (size_t p = 0; p < order.size(); ++p) pos[static_cast<size_t>(order[p])] = static_cast<int>(p);
  return pos;
}

struct Metrics {
  double kt;
  double sr;
  long fd;
  long kd;
};

inline std::vector<int> vec(const rsd::Ranking& r) { return {r.order().begin(), r.order().end()}; }

inline Metrics brute_metrics(const std::vector<int>& a, const std::vector<int>& b) {
  const int k = static_cast<int>(a.size());
  const auto pa = positions(a), pb = positions(b);
  long concordant = 0, discordant = 0;
  for (int i = 0; i < k; ++i) {
    for (int j = i + 1; j < k; ++j) {
      const bool before_a = pa[static_cast<size_t>(i)] < pa[static_cast<size_t>(j)];
      const bool before_b = pb[static_cast<size_t>(i)] < pb[static_cast<size_t>(j)];
      (before_a == before_b ? concordant : discordant)++;
    }
  }
  long d2 = 0, fd = 0;
  for (int i = 0; i < k; ++i) {
    const long d = pa[static_cast<size_t>(i)] - pb[static_cast<size_t>(i)];
    d2 += d * d;
    fd += d < 0 ? -d : d;
  }
  const double pairs = k * (k - 1) / 2.0;
  Metrics m;
  m.kt = static_cast<double>(concordant - discordant) / pairs;
  m.sr = 1.0 - 6.0 * static_cast<double>(d2) / (static_cast<double>(k) * (static_cast<double>(k) * k - 1.0));
  m.fd = fd;
  m.kd = discordant;
  return m;
}

inline std::vector<int> random_perm(int k, std::mt19937_64& rng) {
  std::vector<int> v(static_cast<size_t>(k));
  std::iota(v.begin(), v.end(), 0);
  std::shuffle(v.begin(), v.end(), rng);
  return v;
}

// Next-item distribution of the synthetic ranker after `prefix`.
inline std::vector<double> next_item(const rsd::SyntheticOracleParams& p, const std::vector<int>& prefix) {
  const int k = p.candidates();
  std::vector<bool> used(static_cast<size_t>(k), false);
  for (int x : prefix) used[static_cast<size_t>(x)] = true;
  std::vector<double> score(static_cast<size_t>(k), 0.0);
  double best = -1e300;
  for (int j = 0; j < k; ++j) {
    if (used[static_cast<size_t>(j)]) continue;
    double s = p.base_scores[static_cast<size_t>(j)];
    for (int q : prefix) s += p.interaction[static_cast<size_t>(q * k + j)];
    score[static_cast<size_t>(j)] = s / p.temperature;
    best = std::max(best, score[static_cast<size_t>(j)]);
  }
  double z = 0.0;
  std::vector<double> out(static_cast<size_t>(k), 0.0);
  for (int j = 0; j < k; ++j) {
    if (used[static_cast<size_t>(j)]) continue;
    out[static_cast<size_t>(j)] = std::exp(score[static_cast<size_t>(j)] - best);
    z += out[static_cast<size_t>(j)];
  }
  for (double& x : out) x /= z;
  return out;
}

inline int argmax_first(const std::vector<double>& v, const std::vector<bool>& skip) {
  int best = -1;
  for (size_t j = 0; j < v.size(); ++j) {
    if (skip[j]) continue;
    if (best < 0 || v[j] > v[static_cast<size_t>(best)]) best = static_cast<int>(j);
  }
  return best;
}

// Greedy autoregressive rollout, one item at a time.
inline std::vector<int> greedy_rollout(const rsd::SyntheticOracleParams& p) {
  std::vector<int> prefix;
  std::vector<bool> used(static_cast<size_t>(p.candidates()), false);
  while (static_cast<int>(prefix.size()) < p.candidates()) {
    const int next = argmax_first(next_item(p, prefix), used);
    used[static_cast<size_t>(next)] = true;
    prefix.push_back(next);
  }
  return prefix;
}

// Row-by-row scan for the longest greedy-consistent prefix.
inline int scan_i_star(const std::vector<int>& sigma, const rsd::EncodingMatrix& s) {
  std::vector<bool> used(sigma.size(), false);
  int i_star = -1;
  for (size_t m = 0; m < sigma.size(); ++m) {
    std::vector<double> row(s.row(static_cast<int>(m)).begin(), s.row(static_cast<int>(m)).end());
    if (argmax_first(row, used) != sigma[m]) break;
    used[static_cast<size_t>(sigma[m])] = true;
    i_star = static_cast<int>(m);
  }
  return i_star;
}

// Greedy speculative decoding with the accounting of the serving engine,
// written out independently: identity probe, sigma_0, then verify/fix/sort.
struct GsdRun {
  std::vector<int> final_order;
  std::vector<int> i_stars;
  int encodings = 0;
};

inline GsdRun gsd_simulate(const rsd::SyntheticOracleParams& p, int budget) {
  const int k = p.candidates();
  auto encode = [&](const std::vector<int>& sigma) {
    rsd::EncodingMatrix s(k);
    std::vector<int> prefix;
    for (int m = 0; m < k; ++m) {
      const auto row = next_item(p, prefix);
      for (int j = 0; j < k; ++j) s.at(m, j) = row[static_cast<size_t>(j)];
      prefix.push_back(sigma[static_cast<size_t>(m)]);
    }
    return s;
  };
  GsdRun run;
  std::vector<int> identity(static_cast<size_t>(k));
  std::iota(identity.begin(), identity.end(), 0);
  rsd::EncodingMatrix s = encode(identity);
  run.encodings = 1;
  std::vector<int> sigma(identity);
  std::stable_sort(sigma.begin(), sigma.end(), [&](int a, int b) { return s.at(0, a) > s.at(0, b); });
  if (budget == 1) {
    run.final_order = sigma;
    return run;
  }
  if (sigma != identity) {
    s = encode(sigma);
    ++run.encodings;
  }
  while (true) {
    const int i_star = scan_i_star(sigma, s);
    run.i_stars.push_back(i_star);
    if (i_star == k - 1) break;
    std::vector<bool> used(static_cast<size_t>(k), false);
    std::vector<int> next(sigma.begin(), sigma.begin() + i_star + 1);
    for (int x : next) used[static_cast<size_t>(x)] = true;
    std::vector<double> row(s.row(i_star + 1).begin(), s.row(i_star + 1).end());
    const int g = argmax_first(row, used);
    next.push_back(g);
    used[static_cast<size_t>(g)] = true;
    std::vector<int> rest;
    for (int j = 0; j < k; ++j) {
      if (!used[static_cast<size_t>(j)]) rest.push_back(j);
    }
    std::stable_sort(rest.begin(), rest.end(), [&](int a, int b) { return row[static_cast<size_t>(a)] > row[static_cast<size_t>(b)]; });
    next.insert(next.end(), rest.begin(), rest.end());
    sigma = next;
    if (run.encodings == budget) break;
    s = encode(sigma);
    ++run.encodings;
  }
  run.final_order = sigma;
  return run;
}

inline double chi_square(const std::vector<long>& counts, const std::vector<double>& probs, long n) {
  double chi = 0.0;
  for (size_t i = 0; i < counts.size(); ++i) {
    const double e = probs[i] * static_cast<double>(n);
    chi += (static_cast<double>(counts[i]) - e) * (static_cast<double>(counts[i]) - e) / e;
  }
  return chi;
}

// Upper tail P(X > x) for chi-square with `dof` degrees of freedom via the
// regularized incomplete gamma series / continued fraction.
inline double chi_square_sf(double x, int dof) {
  const double a = dof / 2.0, z = x / 2.0;
  if (z <= 0) return 1.0;
  const double lg = std::lgamma(a);
  if (z < a + 1.0) {
    double sum = 1.0 / a, term = sum;
    for (int n = 1; n < 1000; ++n) {
      term *= z / (a + n);
      sum += term;
      if (std::abs(term) < std::abs(sum) * 1e-15) break;
    }
    return 1.0 - sum * std::exp(-z + a * std::log(z) - lg);
  }
  double b = z + 1.0 - a, c = 1e300, d = 1.0 / b, h = d;
  for (int i = 1; i < 1000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < 1e-300) d = 1e-300;
    c = b + an / c;
    if (std::abs(c) < 1e-300) c = 1e-300;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-15) break;
  }
  return std::exp(-z + a * std::log(z) - lg) * h;
}

}  // namespace ref
