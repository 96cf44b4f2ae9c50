/*
 * Copyright 2026 The refusalkit Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "refusal/http_backend.h"

#include <cstdlib>

#include "httplib.h"

namespace refusal {

using json = nlohmann::json;

namespace {

// Splits "http://host:port/base" into ("http://host:port", "/base").
std::pair<std::string, std::string> split_endpoint(const std::string& endpoint) {
  const auto scheme_end = endpoint.find("://");
  if (scheme_end == std::string::npos) {
    throw ValidationError("endpoint must include a scheme: " + endpoint);
  }
  const auto path_start = endpoint.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {endpoint, ""};
  std::string base = endpoint.substr(path_start);
  while (!base.empty() && base.back() == '/') base.pop_back();
  return {endpoint.substr(0, path_start), base};
}

std::string upstream_message(const std::string& body) {
  try {
    const json doc = json::parse(body);
    if (doc.contains("error")) {
      const json& err = doc["error"];
      if (err.is_string()) return err.get<std::string>();
      if (err.is_object() && err.contains("message") && err["message"].is_string()) {
        return err["message"].get<std::string>();
      }
    }
  } catch (const json::exception&) {
  }
  return body;
}

}  // namespace

HttpBackend::HttpBackend(std::string endpoint, std::string model_name,
                         std::chrono::milliseconds timeout,
                         std::optional<std::string> bearer_token)
    : model_name_(std::move(model_name)),
      timeout_(timeout),
      bearer_token_(std::move(bearer_token)) {
  std::tie(scheme_host_port_, base_path_) = split_endpoint(endpoint);
}

json completion_request_body(const std::string& model, const CompletionRequest& r) {
  json body = {
      {"model", model},
      {"prompt", r.prompt},
      {"max_tokens", r.max_tokens},
      {"temperature", r.temperature},
      {"n", r.n_samples},
      {"echo", r.echo},
  };
  if (r.logprobs) body["logprobs"] = 1;
  if (!r.stop.empty()) body["stop"] = r.stop;
  return body;
}

std::vector<Completion> parse_completion_response(const json& body,
                                                  bool logprobs_requested) {
  if (!body.is_object() || !body.contains("choices") || !body["choices"].is_array()) {
    throw ProtocolError(200, "response has no choices array");
  }
  std::vector<std::pair<int64_t, Completion>> indexed;
  int64_t position = 0;
  for (const json& choice : body["choices"]) {
    if (!choice.is_object() || !choice.contains("text") || !choice["text"].is_string()) {
      throw ProtocolError(200, "choice without text");
    }
    Completion c;
    c.text = choice["text"].get<std::string>();
    c.truncated = choice.value("finish_reason", json()).is_string() &&
                  choice["finish_reason"].get<std::string>() == "length";
    const json logprobs = choice.value("logprobs", json());
    if (logprobs.is_object() && logprobs.contains("tokens")) {
      const json& tokens = logprobs["tokens"];
      const json lps = logprobs.value("token_logprobs", json::array());
      if (!tokens.is_array() || !lps.is_array() || tokens.size() != lps.size()) {
        throw ProtocolError(200, "tokens and token_logprobs differ in length");
      }
      for (size_t i = 0; i < tokens.size(); ++i) {
        TokenLogprob t;
        t.text = tokens[i].get<std::string>();
        if (lps[i].is_number()) {
          const double lp = lps[i].get<double>();
          if (lp > 0.0) throw ProtocolError(200, "positive logprob in response");
          t.logprob = lp;
        }
        c.tokens.push_back(std::move(t));
      }
    } else if (logprobs_requested) {
      throw CapabilityError("endpoint did not return logprobs");
    }
    const int64_t index = choice.value("index", position);
    indexed.emplace_back(index, std::move(c));
    ++position;
  }
  std::stable_sort(indexed.begin(), indexed.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<Completion> out;
  for (auto& [index, c] : indexed) out.push_back(std::move(c));
  return out;
}

std::vector<Completion> HttpBackend::complete(const CompletionRequest& r) {
  httplib::Client client(scheme_host_port_);
  const auto seconds = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
  const auto micros =
      std::chrono::duration_cast<std::chrono::microseconds>(timeout_ - seconds);
  client.set_connection_timeout(seconds.count(), micros.count());
  client.set_read_timeout(seconds.count(), micros.count());
  client.set_write_timeout(seconds.count(), micros.count());
  if (bearer_token_) client.set_bearer_token_auth(*bearer_token_);

  const std::string body = completion_request_body(model_name_, r).dump();
  auto res = client.Post(base_path_ + "/v1/completions", body, "application/json");
  if (!res) {
    throw TransportError("request to " + scheme_host_port_ + " failed: " +
                         httplib::to_string(res.error()));
  }
  if (res->status == 501) throw CapabilityError(upstream_message(res->body));
  if (res->status >= 500) {
    throw TransportError("HTTP " + std::to_string(res->status) + ": " +
                         upstream_message(res->body));
  }
  if (res->status == 429) {
    throw TransportError("HTTP 429: " + upstream_message(res->body));
  }
  if (res->status != 200) throw ProtocolError(res->status, upstream_message(res->body));
  json doc;
  try {
    doc = json::parse(res->body);
  } catch (const json::parse_error& e) {
    throw ProtocolError(res->status, std::string("invalid JSON body: ") + e.what());
  }
  return parse_completion_response(doc, r.logprobs);
}

ModelHandle make_http_model(const std::string& endpoint, const std::string& model_name,
                            RequestLimits limits, std::optional<std::string> auth_env) {
  std::optional<std::string> token;
  if (auth_env) {
    const char* value = std::getenv(auth_env->c_str());
    if (!value) throw ValidationError("environment variable " + *auth_env + " is not set");
    token = value;
  }
  auto backend = std::make_shared<HttpBackend>(endpoint, model_name, limits.timeout, token);
  return ModelHandle(BackendKind::kHttpEndpoint, model_name, std::move(backend), limits,
                     endpoint);
}

}  // namespace refusal
