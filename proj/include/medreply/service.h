/*
 * Copyright (C) 2026 The medreply Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef MEDREPLY_SERVICE_H_
#define MEDREPLY_SERVICE_H_

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "medreply/pipeline.h"

namespace httplib {
class Server;
}

namespace medreply {

// Environment overrides read by ServiceConfig::ApplyEnvironment.
inline constexpr char kBindEnv[] = "MEDREPLY_BIND";  // "host:port"
inline constexpr char kArtifactDirEnv[] = "MEDREPLY_ARTIFACT_DIR";

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::filesystem::path artifact_dir;
  // Override the values stored with the artifacts when set.
  std::optional<double> threshold_p;
  std::optional<size_t> k;
  // Append-only JSONL logs; empty disables the file.
  std::filesystem::path request_log;
  std::filesystem::path selection_log;
  size_t max_body_bytes = 64 * 1024;
  int worker_threads = 8;

  // Throws kInvalidArgument.
  void Validate() const;
  // MEDREPLY_BIND and MEDREPLY_ARTIFACT_DIR take precedence when set.
  void ApplyEnvironment();
};

struct SelectionEvent {
  std::string request_id;
  std::optional<int> chosen_rank;
  std::string timestamp;
  std::string session_id;
};

// Handlers are plain functions of the request body so they can be exercised
// without a socket; Listen() wires them to HTTP routes.
class SuggestService {
 public:
  struct Reply {
    int status = 200;
    std::string body;  // JSON, empty for 204
  };

  explicit SuggestService(ServiceConfig config);
  ~SuggestService();
  SuggestService(const SuggestService&) = delete;
  SuggestService& operator=(const SuggestService&) = delete;

  // Loads config.artifact_dir. Throws on any missing or malformed artifact.
  void Load();
  // Installs in-memory artifacts (tests, embedding in other programs).
  void Attach(std::shared_ptr<const Artifacts> artifacts,
              PipelineConfig pipeline_config);
  bool loaded() const { return loaded_.load(std::memory_order_acquire); }
  const PipelineConfig& pipeline_config() const { return pipeline_config_; }

  Reply HandleSuggest(std::string_view body);
  Reply HandleCanned() const;
  Reply HandleFeedback(std::string_view body);
  Reply HandleHealth() const;

  // Fraction of feedback events whose chosen rank is <= k; 0 without events.
  double OnlinePrecisionAtK(size_t k) const;
  size_t feedback_count() const;

  // Binds and serves until Stop(). Returns false when the bind fails.
  bool Listen();
  // Binds to an ephemeral port on `host` and returns it (tests).
  int BindToAnyPort();
  // Serves on a socket bound by BindToAnyPort.
  bool ListenAfterBind();
  void Stop();

 private:
  void AppendLine(std::ofstream& stream, const std::string& line);
  std::string NextRequestId();
  void SetupRoutes();

  ServiceConfig config_;
  PipelineConfig pipeline_config_;
  std::shared_ptr<const Artifacts> artifacts_;
  std::atomic<bool> loaded_{false};
  const std::chrono::steady_clock::time_point started_;
  const std::string id_prefix_;
  std::atomic<uint64_t> request_counter_{0};

  mutable std::mutex mu_;  // guards everything below
  std::unordered_map<std::string, size_t> issued_;  // request id -> k
  std::unordered_map<std::string, std::string> session_of_;
  std::vector<SelectionEvent> selections_;
  std::ofstream request_log_;
  std::ofstream selection_log_;

  std::unique_ptr<httplib::Server> server_;
};

}  // namespace medreply

#endif  // MEDREPLY_SERVICE_H_
