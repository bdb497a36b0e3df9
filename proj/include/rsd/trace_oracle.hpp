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

#include <filesystem>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "rsd/oracle.hpp"

namespace rsd {

// Line-delimited JSON trace of oracle encodings.
//
//   {"format":"rsd-trace","version":1,"K":20}                 header, first line
//   {"query_id":"q7","ranking":[...],"probs":[[...],...]}      one encoding
//   {"query_id":"q7","target":[...]}                           optional label
//
// Doubles are written with round-trip precision, so a reloaded trace
// reproduces encodings bit for bit.
inline constexpr int kTraceFormatVersion = 1;

class TraceOracle final : public Oracle {
 public:
  static TraceOracle load(const std::filesystem::path& path);

  int candidates() const { return k_; }
  size_t encoding_count() const { return encodings_.size(); }

  // Throws MissingTraceEntry when (query, sigma) was never recorded.
  EncodingMatrix encode(const QueryContext& ctx, const Ranking& sigma) const override;
  // Uses the recorded label when present, otherwise replays greedily.
  Ranking target_ranking(const QueryContext& ctx) const override;

 private:
  int k_ = 0;
  std::map<std::string, EncodingMatrix> encodings_;
  std::map<std::string, Ranking> targets_;
};

// Oracle decorator that remembers every encoding it serves so the session can
// be dumped as a trace.
class RecordingOracle final : public Oracle {
 public:
  RecordingOracle(const Oracle& inner, int candidates) : inner_(inner), k_(candidates) {}

  EncodingMatrix encode(const QueryContext& ctx, const Ranking& sigma) const override;
  Ranking target_ranking(const QueryContext& ctx) const override;

  void write(const std::filesystem::path& path) const;

 private:
  struct Entry {
    std::string query_id;
    Ranking ranking;
    EncodingMatrix probs;
  };

  const Oracle& inner_;
  int k_;
  mutable std::mutex mu_;
  mutable std::map<std::string, Entry> encodings_;
  mutable std::map<std::string, Ranking> targets_;
};

std::string trace_key(const std::string& query_id, const Ranking& sigma);

}  // namespace rsd
