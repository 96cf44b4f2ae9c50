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

#ifndef REFUSAL_ERROR_H_
#define REFUSAL_ERROR_H_

#include <stdexcept>
#include <string>

namespace refusal {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input files or records that do not match their declared schema.
class ParseError : public Error {
 public:
  using Error::Error;
};

// Invalid arguments, configs or cross-artifact mismatches.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Network failure, timeout or a retryable (5xx) upstream status.
class TransportError : public Error {
 public:
  using Error::Error;
};

// The endpoint rejected the request; carries the upstream message.
class ProtocolError : public Error {
 public:
  ProtocolError(int status, const std::string& message)
      : Error("HTTP " + std::to_string(status) + ": " + message),
        status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

// The backend cannot provide what the operation needs (logprobs, echo).
class CapabilityError : public Error {
 public:
  using Error::Error;
};

// A file the operation depends on does not exist.
class MissingInputError : public Error {
 public:
  using Error::Error;
};

}  // namespace refusal

#endif  // REFUSAL_ERROR_H_
