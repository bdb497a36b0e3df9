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

#include "rsd/cost_model.hpp"

#include <stdexcept>

namespace rsd {

ComplexityEstimate estimate_cost(double prompt_tokens, int candidates, int budget, double model_dim,
                                 bool with_kv_cache) {
  if (prompt_tokens <= 0 || candidates <= 0 || model_dim <= 0 || budget < 0) {
    throw std::invalid_argument("estimate_cost: M, K, o must be positive and T non-negative");
  }
  ComplexityEstimate e;
  e.prompt_tokens = prompt_tokens;
  e.candidates = candidates;
  e.budget = budget;
  e.model_dim = model_dim;
  e.with_kv_cache = with_kv_cache;

  const double context = prompt_tokens + candidates;
  const double per_encoding = with_kv_cache ? context : context * context;
  e.rsd_cost = budget * per_encoding * model_dim;
  e.sd_cost = e.rsd_cost;

  double ar = with_kv_cache ? 0.0 : prompt_tokens * prompt_tokens;
  for (int k = 1; k <= candidates; ++k) {
    const double len = candidates + k;
    ar += with_kv_cache ? len : len * len;
  }
  e.autoregressive_cost = ar * model_dim;
  return e;
}

}  // namespace rsd
