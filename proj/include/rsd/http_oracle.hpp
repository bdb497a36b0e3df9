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

#include <string>

#include "rsd/oracle.hpp"

namespace rsd {

// Oracle backed by a remote ranker.
//
//   POST <url>  {"query_id": str, "ranking": [int; K]}
//   200         {"logits": [[real; K]; K]}
//
// Row m of the logits is renormalized with a softmax over the candidates
// not placed by ranking[:m]. Transport failures raise HttpTimeout; non-200
// status, bad JSON or a shape mismatch raise MalformedResponse.
class HttpOracle final : public Oracle {
 public:
  HttpOracle(std::string endpoint_url, int timeout_ms);

  EncodingMatrix encode(const QueryContext& ctx, const Ranking& sigma) const override;

  const std::string& host() const { return host_; }
  int port() const { return port_; }
  const std::string& path() const { return path_; }

 private:
  std::string host_;
  int port_ = 80;
  std::string path_ = "/";
  int timeout_ms_;
};

// Parses {"logits": [[...]]} and renormalizes it against sigma.
EncodingMatrix encoding_from_logits_json(const std::string& body, const Ranking& sigma);

}  // namespace rsd
