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

#include <stdexcept>
#include <string>

namespace rsd {

// Shape disagreement between rankings, matrices or parameter blocks.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Raised before any oracle work when the episode ledger is already spent.
class BudgetExceeded : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MissingTraceEntry : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class HttpTimeout : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MalformedResponse : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// History longer than the policy's round-embedding table.
class CapacityError : public std::length_error {
 public:
  using std::length_error::length_error;
};

}  // namespace rsd
