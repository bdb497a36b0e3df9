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

#include <span>
#include <vector>

namespace rsd {

struct AdamConfig {
  double lr = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. step() descends: params -= lr * mhat / (sqrt(vhat) + eps).
class Adam {
 public:
  Adam(size_t size, AdamConfig config = {});

  void step(std::span<double> params, std::span<const double> grad);
  void reset();

  const AdamConfig& config() const { return config_; }
  long steps() const { return t_; }

 private:
  AdamConfig config_;
  std::vector<double> m_, v_;
  long t_ = 0;
};

}  // namespace rsd
