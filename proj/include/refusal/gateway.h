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

#ifndef REFUSAL_GATEWAY_H_
#define REFUSAL_GATEWAY_H_

#include <algorithm>
#include <atomic>
#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "refusal/error.h"

namespace refusal {

struct RequestLimits {
  int max_concurrent = 8;
  std::chrono::milliseconds timeout{60000};
  // Total attempts per request, including the first.
  int max_attempts = 3;
  // Delay before the second attempt; doubles per retry.
  std::chrono::milliseconds backoff_base{1000};

  void validate() const;
};

struct CompletionRequest {
  std::string prompt;
  int max_tokens = 32;
  double temperature = 0.0;
  int n_samples = 1;
  bool logprobs = false;
  // Return the prompt tokens (with their logprobs) ahead of the generation.
  bool echo = false;
  std::vector<std::string> stop;

  // Throws ValidationError: n_samples >= 1, temperature >= 0,
  // temperature == 0 implies n_samples == 1, max_tokens >= 0.
  void validate() const;
};

struct TokenLogprob {
  std::string text;
  // Natural-log probability; absent for tokens the backend did not score
  // (e.g. the first echoed prompt token).
  std::optional<double> logprob;
};

struct Completion {
  std::string text;
  std::vector<TokenLogprob> tokens;
  bool truncated = false;
};

// One model implementation. Implementations make a single attempt per call;
// retries, permits and batching live in ModelHandle.
class CompletionBackend {
 public:
  virtual ~CompletionBackend() = default;
  // Returns r.n_samples completions or throws TransportError /
  // ProtocolError / CapabilityError.
  virtual std::vector<Completion> complete(const CompletionRequest& r) = 0;
};

enum class BackendKind { kHttpEndpoint, kInProcessSynthetic };

// Uniform access to a completion model. Copies share the backend and the
// request permits, so the concurrency bound holds across all callers.
class ModelHandle {
 public:
  ModelHandle(BackendKind kind, std::string model_name,
              std::shared_ptr<CompletionBackend> backend,
              RequestLimits limits = {},
              std::optional<std::string> endpoint = std::nullopt);

  BackendKind kind() const { return kind_; }
  const std::string& model_name() const { return model_name_; }
  const std::optional<std::string>& endpoint() const { return endpoint_; }
  const RequestLimits& limits() const { return limits_; }
  CompletionBackend& backend() const { return *backend_; }

  // complete() with permits and retries: TransportError is retried up to
  // limits.max_attempts with exponential backoff; other errors propagate.
  std::vector<Completion> complete(const CompletionRequest& r) const;

 private:
  BackendKind kind_;
  std::string model_name_;
  std::shared_ptr<CompletionBackend> backend_;
  RequestLimits limits_;
  std::optional<std::string> endpoint_;
  std::shared_ptr<std::counting_semaphore<>> permits_;
};

// Free-function spelling of ModelHandle::complete.
std::vector<Completion> complete(const ModelHandle& m, const CompletionRequest& r);

struct ChoiceScores {
  // candidate -> log-probability of the candidate continuing the prompt.
  std::map<std::string, double> scores;
  // Candidate with the highest score; ties go to the earliest candidate.
  std::string argmax;
  bool tie = false;
};

// Scores each candidate as the log-probability of its tokens following
// `prompt`, using an echo request over prompt + candidate and summing the
// trailing tokens that cover the candidate's characters. Throws
// CapabilityError if the backend returns no logprobs.
ChoiceScores choice_scores(const ModelHandle& m, std::string_view prompt,
                           const std::vector<std::string>& candidates);

// Per-token logprobs of `text` itself (echo, max_tokens = 0). Throws
// CapabilityError if the backend cannot score prompts.
std::vector<TokenLogprob> score_prompt(const ModelHandle& m, std::string_view text);

// Picks the argmax of a score vector; ties resolve to the lowest index.
size_t argmax_first(const std::vector<double>& scores, bool* tie = nullptr);

enum class ErrorKind { kNone, kTransport, kProtocol, kCapability, kValidation, kOther };

std::string_view to_string(ErrorKind kind);

struct KeyedError {
  ErrorKind kind = ErrorKind::kOther;
  std::string message;
};

template <typename T>
struct Keyed {
  std::optional<T> value;
  std::optional<KeyedError> error;
  bool ok() const { return value.has_value(); }
};

KeyedError classify_current_exception();

// Runs fn(i) for i in [0, n) on at most `max_concurrent` worker threads and
// returns results in index order. Exceptions become per-index errors.
template <typename T>
std::vector<Keyed<T>> parallel_keyed(size_t n, int max_concurrent,
                                     const std::function<T(size_t)>& fn) {
  std::vector<Keyed<T>> out(n);
  std::atomic<size_t> next{0};
  auto worker = [&] {
    for (size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
      try {
        out[i].value.emplace(fn(i));
      } catch (...) {
        out[i].error = classify_current_exception();
      }
    }
  };
  const size_t workers =
      std::min(n, static_cast<size_t>(std::max(1, max_concurrent)));
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  }
  return out;
}

using BatchResult = Keyed<std::vector<Completion>>;

// Executes keyed requests with at most m.limits().max_concurrent in flight.
// Failures are carried per key. Throws ValidationError on duplicate keys.
std::map<std::string, BatchResult> run_batch(
    const ModelHandle& m,
    const std::vector<std::pair<std::string, CompletionRequest>>& requests);

}  // namespace refusal

#endif  // REFUSAL_GATEWAY_H_
