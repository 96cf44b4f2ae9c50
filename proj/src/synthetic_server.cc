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

#include "refusal/synthetic_server.h"

#include "httplib.h"
#include "json.hpp"

namespace refusal {

using json = nlohmann::json;

namespace {

json error_body(const std::string& message) {
  return json{{"error", {{"message", message}}}};
}

CompletionRequest request_from_body(const json& body) {
  if (!body.is_object()) throw ValidationError("body must be a JSON object");
  CompletionRequest r;
  const json& prompt = body.at("prompt");
  if (!prompt.is_string()) throw ValidationError("prompt must be a string");
  r.prompt = prompt.get<std::string>();
  r.max_tokens = body.value("max_tokens", 16);
  r.temperature = body.value("temperature", 1.0);
  r.n_samples = body.value("n", 1);
  r.echo = body.value("echo", false);
  if (body.contains("logprobs") && !body["logprobs"].is_null()) {
    if (!body["logprobs"].is_number_integer() || body["logprobs"].get<int>() < 0) {
      throw ValidationError("logprobs must be a non-negative integer");
    }
    r.logprobs = true;
  }
  if (body.contains("stop") && !body["stop"].is_null()) {
    if (body["stop"].is_string()) {
      r.stop.push_back(body["stop"].get<std::string>());
    } else {
      r.stop = body["stop"].get<std::vector<std::string>>();
    }
  }
  return r;
}

json completion_response(const std::string& model, const CompletionRequest& r,
                         const std::vector<Completion>& completions) {
  json choices = json::array();
  for (size_t i = 0; i < completions.size(); ++i) {
    const Completion& c = completions[i];
    json choice = {{"index", i},
                   {"text", c.text},
                   {"finish_reason", c.truncated ? "length" : "stop"}};
    if (r.logprobs) {
      json tokens = json::array();
      json lps = json::array();
      for (const TokenLogprob& t : c.tokens) {
        tokens.push_back(t.text);
        lps.push_back(t.logprob ? json(*t.logprob) : json(nullptr));
      }
      choice["logprobs"] = {{"tokens", tokens}, {"token_logprobs", lps}};
    } else {
      choice["logprobs"] = nullptr;
    }
    choices.push_back(std::move(choice));
  }
  return json{{"object", "text_completion"}, {"model", model}, {"choices", choices}};
}

}  // namespace

SyntheticServer::SyntheticServer(std::shared_ptr<SyntheticBackend> backend)
    : backend_(std::move(backend)), server_(std::make_unique<httplib::Server>()) {
  server_->Get("/capabilities", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(json{{"logprobs", true}, {"echo", true}, {"next_token_scores", true}}.dump(),
                    "application/json");
  });
  server_->Post("/v1/completions", [this](const httplib::Request& req, httplib::Response& res) {
    try {
      json body;
      try {
        body = json::parse(req.body);
      } catch (const json::parse_error& e) {
        throw ValidationError(std::string("malformed body: ") + e.what());
      }
      CompletionRequest r;
      try {
        r = request_from_body(body);
      } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed body: ") + e.what());
      }
      const auto completions = backend_->complete(r);
      res.set_content(completion_response(body.value("model", "synthetic"), r, completions).dump(),
                      "application/json");
    } catch (const ValidationError& e) {
      res.status = 400;
      res.set_content(error_body(e.what()).dump(), "application/json");
    } catch (const CapabilityError& e) {
      res.status = 501;
      res.set_content(error_body(e.what()).dump(), "application/json");
    } catch (const std::exception& e) {
      res.status = 500;
      res.set_content(error_body(e.what()).dump(), "application/json");
    }
  });
}

SyntheticServer::~SyntheticServer() { stop(); }

int SyntheticServer::start(const std::string& host, int port) {
  host_ = host;
  if (port == 0) {
    port_ = server_->bind_to_any_port(host);
  } else {
    if (!server_->bind_to_port(host, port)) port = -1;
    port_ = port;
  }
  if (port_ < 0) throw TransportError("cannot bind " + host);
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port_;
}

void SyntheticServer::listen(const std::string& host, int port) {
  host_ = host;
  port_ = port;
  if (!server_->listen(host, port)) throw TransportError("cannot listen on " + endpoint());
}

void SyntheticServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

std::string SyntheticServer::endpoint() const {
  return "http://" + host_ + ":" + std::to_string(port_);
}

}  // namespace refusal
