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

#include "refusal/gateway.h"

#include <cmath>
#include <set>
#include <thread>

namespace refusal {

void RequestLimits::validate() const {
  if (max_concurrent <= 0) throw ValidationError("max_concurrent must be positive");
  if (timeout.count() <= 0) throw ValidationError("timeout must be positive");
  if (max_attempts <= 0) throw ValidationError("max_attempts must be positive");
  if (backoff_base.count() < 0) throw ValidationError("backoff_base must be non-negative");
}

void CompletionRequest::validate() const {
  if (n_samples < 1) throw ValidationError("n_samples must be >= 1");
  if (!(temperature >= 0.0)) throw ValidationError("temperature must be >= 0");
  if (temperature == 0.0 && n_samples != 1) {
    throw ValidationError("greedy decoding (temperature 0) requires n_samples = 1");
  }
  if (max_tokens < 0) throw ValidationError("max_tokens must be >= 0");
}

ModelHandle::ModelHandle(BackendKind kind, std::string model_name,
                         std::shared_ptr<CompletionBackend> backend,
                         RequestLimits limits,
                         std::optional<std::string> endpoint)
    : kind_(kind),
      model_name_(std::move(model_name)),
      backend_(std::move(backend)),
      limits_(limits),
      endpoint_(std::move(endpoint)) {
  limits_.validate();
  if (!backend_) throw ValidationError("model handle without backend");
  if (kind_ == BackendKind::kHttpEndpoint && (!endpoint_ || endpoint_->empty())) {
    throw ValidationError("http_endpoint model requires an endpoint");
  }
  permits_ = std::make_shared<std::counting_semaphore<>>(limits_.max_concurrent);
}

std::vector<Completion> ModelHandle::complete(const CompletionRequest& r) const {
  r.validate();
  for (int attempt = 0;; ++attempt) {
    try {
      permits_->acquire();
      struct Release {
        std::counting_semaphore<>* s;
        ~Release() { s->release(); }
      } release{permits_.get()};
      auto out = backend_->complete(r);
      if (out.size() != static_cast<size_t>(r.n_samples)) {
        throw ProtocolError(200, "expected " + std::to_string(r.n_samples) +
                                     " completions, got " + std::to_string(out.size()));
      }
      return out;
    } catch (const TransportError& e) {
      if (attempt + 1 >= limits_.max_attempts) {
        throw TransportError(std::string(e.what()) + " (after " +
                             std::to_string(attempt + 1) + " attempts)");
      }
      std::this_thread::sleep_for(limits_.backoff_base * (int64_t{1} << attempt));
    }
  }
}

std::vector<Completion> complete(const ModelHandle& m, const CompletionRequest& r) {
  return m.complete(r);
}

size_t argmax_first(const std::vector<double>& scores, bool* tie) {
  size_t best = 0;
  bool tied = false;
  for (size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) {
      best = i;
      tied = false;
    } else if (scores[i] == scores[best]) {
      tied = true;
    }
  }
  if (tie) *tie = tied;
  return best;
}

ChoiceScores choice_scores(const ModelHandle& m, std::string_view prompt,
                           const std::vector<std::string>& candidates) {
  if (candidates.empty()) throw ValidationError("choice_scores needs candidates");
  std::set<std::string> unique(candidates.begin(), candidates.end());
  if (unique.size() != candidates.size()) {
    throw ValidationError("duplicate choice candidates");
  }
  std::vector<double> values;
  ChoiceScores out;
  for (const std::string& candidate : candidates) {
    if (candidate.empty()) throw ValidationError("empty choice candidate");
    CompletionRequest r;
    r.prompt = std::string(prompt) + candidate;
    r.max_tokens = 0;
    r.logprobs = true;
    r.echo = true;
    const auto completions = m.complete(r);
    const auto& tokens = completions.front().tokens;
    size_t covered = 0;
    double total = 0.0;
    for (auto it = tokens.rbegin(); it != tokens.rend() && covered < candidate.size(); ++it) {
      if (!it->logprob) throw CapabilityError("backend returned no logprob for candidate token");
      total += *it->logprob;
      covered += it->text.size();
    }
    if (covered < candidate.size()) {
      throw CapabilityError("backend did not echo prompt tokens with logprobs");
    }
    out.scores[candidate] = total;
    values.push_back(total);
  }
  out.argmax = candidates[argmax_first(values, &out.tie)];
  return out;
}

std::vector<TokenLogprob> score_prompt(const ModelHandle& m, std::string_view text) {
  CompletionRequest r;
  r.prompt = std::string(text);
  r.max_tokens = 0;
  r.logprobs = true;
  r.echo = true;
  auto completions = m.complete(r);
  auto tokens = std::move(completions.front().tokens);
  const bool any = std::any_of(tokens.begin(), tokens.end(),
                               [](const TokenLogprob& t) { return t.logprob.has_value(); });
  if (!any) throw CapabilityError("backend does not score prompt tokens");
  return tokens;
}

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kNone: return "none";
    case ErrorKind::kTransport: return "transport";
    case ErrorKind::kProtocol: return "protocol";
    case ErrorKind::kCapability: return "capability";
    case ErrorKind::kValidation: return "validation";
    case ErrorKind::kOther: return "other";
  }
  return "other";
}

KeyedError classify_current_exception() {
  try {
    throw;
  } catch (const TransportError& e) {
    return {ErrorKind::kTransport, e.what()};
  } catch (const ProtocolError& e) {
    return {ErrorKind::kProtocol, e.what()};
  } catch (const CapabilityError& e) {
    return {ErrorKind::kCapability, e.what()};
  } catch (const ValidationError& e) {
    return {ErrorKind::kValidation, e.what()};
  } catch (const std::exception& e) {
    return {ErrorKind::kOther, e.what()};
  } catch (...) {
    return {ErrorKind::kOther, "unknown error"};
  }
}

std::map<std::string, BatchResult> run_batch(
    const ModelHandle& m,
    const std::vector<std::pair<std::string, CompletionRequest>>& requests) {
  std::set<std::string> keys;
  for (const auto& [key, request] : requests) {
    if (!keys.insert(key).second) throw ValidationError("duplicate batch key '" + key + "'");
  }
  auto results = parallel_keyed<std::vector<Completion>>(
      requests.size(), m.limits().max_concurrent,
      [&](size_t i) { return m.complete(requests[i].second); });
  std::map<std::string, BatchResult> out;
  for (size_t i = 0; i < requests.size(); ++i) {
    out.emplace(requests[i].first, std::move(results[i]));
  }
  return out;
}

}  // namespace refusal
