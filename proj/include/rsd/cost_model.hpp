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

namespace rsd {

// Closed-form decoding cost of the three strategies for a prompt of M
// tokens, K candidates, encoding budget T and model width o:
//
//   rsd            T (M+K)^2 o                    cached: T (M+K) o
//   autoregressive (M^2 + sum_{k=1..K} (K+k)^2) o cached: sum_{k=1..K} (K+k) o
//   speculative    T_sp (M+K)^2 o, T_sp = T       cached: T_sp (M+K) o
struct ComplexityEstimate {
  double prompt_tokens = 0;
  int candidates = 0;
  int budget = 0;
  double model_dim = 0;
  bool with_kv_cache = false;
  double rsd_cost = 0;
  double autoregressive_cost = 0;
  double sd_cost = 0;
};

ComplexityEstimate estimate_cost(double prompt_tokens, int candidates, int budget, double model_dim,
                                 bool with_kv_cache);

}  // namespace rsd
