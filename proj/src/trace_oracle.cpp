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

#include "rsd/trace_oracle.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "rsd/errors.hpp"

namespace rsd {

using nlohmann::json;

std::string trace_key(const std::string& query_id, const Ranking& sigma) {
  std::string key = query_id;
  key += '|';
  for (int item : sigma.order()) {
    key += std::to_string(item);
    key += ',';
  }
  return key;
}

namespace {

EncodingMatrix matrix_from_json(const json& rows, int k) {
  if (!rows.is_array() || static_cast<int>(rows.size()) != k) throw DimensionError("trace: probs must have K rows");
  EncodingMatrix s(k);
  for (int m = 0; m < k; ++m) {
    const json& row = rows[static_cast<size_t>(m)];
    if (!row.is_array() || static_cast<int>(row.size()) != k) throw DimensionError("trace: probs row must have K entries");
    for (int j = 0; j < k; ++j) s.at(m, j) = row[static_cast<size_t>(j)].get<double>();
  }
  return s;
}

json matrix_to_json(const EncodingMatrix& s) {
  json rows = json::array();
  for (int m = 0; m < s.size(); ++m) {
    const auto r = s.row(m);
    rows.push_back(json(std::vector<double>(r.begin(), r.end())));
  }
  return rows;
}

}  // namespace

TraceOracle TraceOracle::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("trace: cannot open " + path.string());
  TraceOracle oracle;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("trace: empty file " + path.string());
  const json header = json::parse(line);
  if (header.value("format", "") != "rsd-trace" || header.value("version", 0) != kTraceFormatVersion) {
    throw std::runtime_error("trace: unsupported header in " + path.string());
  }
  oracle.k_ = header.at("K").get<int>();
  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const json rec = json::parse(line);
    const auto query_id = rec.at("query_id").get<std::string>();
    if (rec.contains("target")) {
      oracle.targets_.insert_or_assign(query_id, Ranking(rec["target"].get<std::vector<int>>()));
      continue;
    }
    Ranking sigma(rec.at("ranking").get<std::vector<int>>());
    if (sigma.size() != oracle.k_) {
      throw DimensionError("trace: ranking size mismatch on line " + std::to_string(line_no));
    }
    oracle.encodings_.insert_or_assign(trace_key(query_id, sigma), matrix_from_json(rec.at("probs"), oracle.k_));
  }
  return oracle;
}

EncodingMatrix TraceOracle::encode(const QueryContext& ctx, const Ranking& sigma) const {
  if (sigma.size() != k_ || ctx.candidate_count != k_) {
    throw DimensionError("trace oracle: expected K=" + std::to_string(k_));
  }
  const auto it = encodings_.find(trace_key(ctx.query_id, sigma));
  if (it == encodings_.end()) throw MissingTraceEntry("trace has no encoding for " + trace_key(ctx.query_id, sigma));
  return it->second;
}

Ranking TraceOracle::target_ranking(const QueryContext& ctx) const {
  const auto it = targets_.find(ctx.query_id);
  if (it != targets_.end()) return it->second;
  return Oracle::target_ranking(ctx);
}

EncodingMatrix RecordingOracle::encode(const QueryContext& ctx, const Ranking& sigma) const {
  EncodingMatrix s = inner_.encode(ctx, sigma);
  std::lock_guard<std::mutex> lock(mu_);
  encodings_.insert_or_assign(trace_key(ctx.query_id, sigma), Entry{ctx.query_id, sigma, s});
  return s;
}

Ranking RecordingOracle::target_ranking(const QueryContext& ctx) const {
  // Route through this->encode so the replay encodings land in the trace.
  Ranking target = Oracle::target_ranking(ctx);
  std::lock_guard<std::mutex> lock(mu_);
  targets_.insert_or_assign(ctx.query_id, target);
  return target;
}

void RecordingOracle::write(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("trace: cannot write " + path.string());
  out << json{{"format", "rsd-trace"}, {"version", kTraceFormatVersion}, {"K", k_}}.dump() << '\n';
  std::lock_guard<std::mutex> lock(mu_);
  for (const auto& [key, entry] : encodings_) {
    const auto order = entry.ranking.order();
    out << json{{"query_id", entry.query_id},
                {"ranking", std::vector<int>(order.begin(), order.end())},
                {"probs", matrix_to_json(entry.probs)}}
               .dump()
        << '\n';
  }
  for (const auto& [query_id, target] : targets_) {
    const auto order = target.order();
    out << json{{"query_id", query_id}, {"target", std::vector<int>(order.begin(), order.end())}}.dump() << '\n';
  }
}

}  // namespace rsd
