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

#include "rsd/http_oracle.hpp"

#include <cmath>
#include <regex>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "rsd/errors.hpp"

namespace rsd {

using nlohmann::json;

HttpOracle::HttpOracle(std::string endpoint_url, int timeout_ms) : timeout_ms_(timeout_ms) {
  static const std::regex kUrl(R"(^http://([^/:]+)(?::(\d+))?(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(endpoint_url, m, kUrl)) {
    throw std::invalid_argument("HttpOracle: expected http://host[:port]/path, got " + endpoint_url);
  }
  host_ = m[1].str();
  if (m[2].matched) port_ = std::stoi(m[2].str());
  if (m[3].matched) path_ = m[3].str();
  if (timeout_ms_ <= 0) throw std::invalid_argument("HttpOracle: timeout must be positive");
}

EncodingMatrix encoding_from_logits_json(const std::string& body, const Ranking& sigma) {
  json doc;
  try {
    doc = json::parse(body);
  } catch (const json::exception& e) {
    throw MalformedResponse(std::string("oracle response is not JSON: ") + e.what());
  }
  const int k = sigma.size();
  if (!doc.is_object() || !doc.contains("logits") || !doc["logits"].is_array() ||
      static_cast<int>(doc["logits"].size()) != k) {
    throw MalformedResponse("oracle response must carry a K x K \"logits\" array");
  }
  EncodingMatrix s(k);
  std::vector<double> logits(static_cast<size_t>(k));
  const auto order = sigma.order();
  for (int m = 0; m < k; ++m) {
    const json& row = doc["logits"][static_cast<size_t>(m)];
    if (!row.is_array() || static_cast<int>(row.size()) != k) throw MalformedResponse("logits row has wrong length");
    for (int j = 0; j < k; ++j) {
      const json& v = row[static_cast<size_t>(j)];
      if (!v.is_number()) throw MalformedResponse("logits entry is not a number");
      logits[static_cast<size_t>(j)] = v.get<double>();
      if (!std::isfinite(logits[static_cast<size_t>(j)])) throw MalformedResponse("logits entry is not finite");
    }
    masked_softmax(logits, order.subspan(0, static_cast<size_t>(m)), 1.0, s.row(m));
  }
  return s;
}

EncodingMatrix HttpOracle::encode(const QueryContext& ctx, const Ranking& sigma) const {
  if (sigma.size() != ctx.candidate_count) throw DimensionError("http oracle: ranking size mismatch");
  httplib::Client client(host_, port_);
  const auto seconds = timeout_ms_ / 1000;
  const auto micros = (timeout_ms_ % 1000) * 1000;
  client.set_connection_timeout(seconds, micros);
  client.set_read_timeout(seconds, micros);
  client.set_write_timeout(seconds, micros);

  const auto order = sigma.order();
  const json request{{"query_id", ctx.query_id}, {"ranking", std::vector<int>(order.begin(), order.end())}};
  auto res = client.Post(path_, request.dump(), "application/json");
  if (!res) {
    throw HttpTimeout("http oracle: no response from " + host_ + ":" + std::to_string(port_) + " (" +
                      httplib::to_string(res.error()) + ")");
  }
  if (res->status != 200) throw MalformedResponse("http oracle: status " + std::to_string(res->status));
  return encoding_from_logits_json(res->body, sigma);
}

}  // namespace rsd
