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

#ifndef REFUSAL_HTTP_BACKEND_H_
#define REFUSAL_HTTP_BACKEND_H_

#include <chrono>
#include <optional>
#include <string>

#include "json.hpp"
#include "refusal/gateway.h"

namespace refusal {

// Client for an OpenAI-compatible /v1/completions endpoint.
//
// Request fields: model, prompt, max_tokens, temperature, n, logprobs,
// echo, stop. Response fields read: choices[].text, choices[].index,
// choices[].finish_reason, choices[].logprobs.tokens,
// choices[].logprobs.token_logprobs.
class HttpBackend : public CompletionBackend {
 public:
  // `endpoint` is scheme://host[:port][/base]; requests go to
  // {endpoint}/v1/completions. `bearer_token` is sent as Authorization.
  HttpBackend(std::string endpoint, std::string model_name,
              std::chrono::milliseconds timeout,
              std::optional<std::string> bearer_token = std::nullopt);

  std::vector<Completion> complete(const CompletionRequest& r) override;

 private:
  std::string scheme_host_port_;
  std::string base_path_;
  std::string model_name_;
  std::chrono::milliseconds timeout_;
  std::optional<std::string> bearer_token_;
};

nlohmann::json completion_request_body(const std::string& model,
                                       const CompletionRequest& r);

// Parses a completions response. Throws ProtocolError on a malformed body and
// CapabilityError when logprobs were requested but are missing.
std::vector<Completion> parse_completion_response(const nlohmann::json& body,
                                                  bool logprobs_requested);

// Builds an http_endpoint ModelHandle; the bearer token is read from the
// environment variable `auth_env` when given (missing variable is an error).
ModelHandle make_http_model(const std::string& endpoint,
                            const std::string& model_name,
                            RequestLimits limits = {},
                            std::optional<std::string> auth_env = std::nullopt);

}  // namespace refusal

#endif  // REFUSAL_HTTP_BACKEND_H_
