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

#ifndef REFUSAL_SYNTHETIC_SERVER_H_
#define REFUSAL_SYNTHETIC_SERVER_H_

#include <memory>
#include <string>
#include <thread>

#include "refusal/synthetic_model.h"

namespace httplib {
class Server;
}

namespace refusal {

// Serves a SyntheticBackend over the OpenAI-compatible completions protocol:
// POST /v1/completions and GET /capabilities. Backend TransportErrors map to
// 500, ValidationErrors to 400 and CapabilityErrors to 501.
class SyntheticServer {
 public:
  explicit SyntheticServer(std::shared_ptr<SyntheticBackend> backend);
  ~SyntheticServer();

  SyntheticServer(const SyntheticServer&) = delete;
  SyntheticServer& operator=(const SyntheticServer&) = delete;

  // Binds host:port (port 0 picks a free port) and serves on a background
  // thread. Returns the bound port.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  // Blocks serving on the calling thread.
  void listen(const std::string& host, int port);
  void stop();

  std::string endpoint() const;

 private:
  std::shared_ptr<SyntheticBackend> backend_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  std::string host_;
  int port_ = 0;
};

}  // namespace refusal

#endif  // REFUSAL_SYNTHETIC_SERVER_H_
