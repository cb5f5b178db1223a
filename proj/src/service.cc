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

#include "medreply/service.h"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <ctime>

#include "httplib.h"
#include "medreply/error.h"
#include "medreply/io.h"

namespace medreply {
namespace {

using json = nlohmann::json;

std::string UtcTimestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                      now.time_since_epoch())
                      .count() %
                  1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char date[32];
  std::strftime(date, sizeof(date), "%Y-%m-%dT%H:%M:%S", &tm);
  char millis[8];
  std::snprintf(millis, sizeof(millis), ".%03dZ", static_cast<int>(ms));
  return std::string(date) + millis;
}

SuggestService::Reply ErrorReply(int status, const std::string& message) {
  return {status, json{{"error", message}}.dump()};
}

bool Blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(),
                     [](unsigned char c) { return std::isspace(c); });
}

std::string MakeIdPrefix() {
  const auto ns = std::chrono::duration_cast<std::chrono::nanoseconds>(
                      std::chrono::system_clock::now().time_since_epoch())
                      .count();
  return Fingerprint(std::to_string(ns)).substr(0, 8);
}

}  // namespace

void ServiceConfig::Validate() const {
  if (k && *k < 1) throw Error(ErrorCode::kInvalidArgument, "k must be >= 1");
  if (threshold_p && !(*threshold_p >= 0.0 && *threshold_p <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "threshold_p must lie in [0,1]");
  }
  if (max_body_bytes < 1024) {
    throw Error(ErrorCode::kInvalidArgument, "body limit must be >= 1 KiB");
  }
  if (port < 0 || port > 65535) {
    throw Error(ErrorCode::kInvalidArgument, "port out of range");
  }
  if (worker_threads < 1) {
    throw Error(ErrorCode::kInvalidArgument, "worker_threads must be >= 1");
  }
}

void ServiceConfig::ApplyEnvironment() {
  if (const char* bind = std::getenv(kBindEnv); bind && *bind) {
    const std::string value = bind;
    const size_t colon = value.rfind(':');
    if (colon == std::string::npos) {
      host = value;
    } else {
      if (colon > 0) host = value.substr(0, colon);
      try {
        port = std::stoi(value.substr(colon + 1));
      } catch (const std::exception&) {
        throw Error(ErrorCode::kInvalidArgument,
                    std::string(kBindEnv) + " has a bad port: " + value);
      }
    }
  }
  if (const char* dir = std::getenv(kArtifactDirEnv); dir && *dir) {
    artifact_dir = dir;
  }
}

SuggestService::SuggestService(ServiceConfig config)
    : config_(std::move(config)),
      started_(std::chrono::steady_clock::now()),
      id_prefix_(MakeIdPrefix()) {
  config_.Validate();
  if (!config_.request_log.empty()) {
    if (config_.request_log.has_parent_path()) {
      std::filesystem::create_directories(config_.request_log.parent_path());
    }
    request_log_.open(config_.request_log, std::ios::app);
    if (!request_log_) {
      throw Error(ErrorCode::kIo, "cannot open " + config_.request_log.string());
    }
  }
  if (!config_.selection_log.empty()) {
    if (config_.selection_log.has_parent_path()) {
      std::filesystem::create_directories(config_.selection_log.parent_path());
    }
    selection_log_.open(config_.selection_log, std::ios::app);
    if (!selection_log_) {
      throw Error(ErrorCode::kIo,
                  "cannot open " + config_.selection_log.string());
    }
  }
}

SuggestService::~SuggestService() { Stop(); }

void SuggestService::Load() {
  if (config_.artifact_dir.empty()) {
    throw Error(ErrorCode::kArtifactsMissing, "no artifact directory configured");
  }
  PipelineConfig pipeline_config;
  std::shared_ptr<const Artifacts> artifacts =
      Artifacts::LoadDir(config_.artifact_dir, &pipeline_config);
  Attach(std::move(artifacts), pipeline_config);
}

void SuggestService::Attach(std::shared_ptr<const Artifacts> artifacts,
                            PipelineConfig pipeline_config) {
  if (!artifacts || !artifacts->ready()) {
    throw Error(ErrorCode::kArtifactsMissing, "artifacts without models");
  }
  if (config_.threshold_p) pipeline_config.threshold_p = *config_.threshold_p;
  if (config_.k) pipeline_config.k = *config_.k;
  pipeline_config.Validate();
  pipeline_config_ = std::move(pipeline_config);
  artifacts_ = std::move(artifacts);
  loaded_.store(true, std::memory_order_release);
}

std::string SuggestService::NextRequestId() {
  return "req-" + id_prefix_ + "-" + std::to_string(++request_counter_);
}

void SuggestService::AppendLine(std::ofstream& stream, const std::string& line) {
  // callers hold mu_
  if (!stream.is_open()) return;
  stream << line << '\n';
  stream.flush();
}

SuggestService::Reply SuggestService::HandleSuggest(std::string_view body) {
  if (!loaded()) return ErrorReply(503, "artifacts not loaded");
  if (body.size() > config_.max_body_bytes) {
    return ErrorReply(413, "request body too large");
  }
  json request = json::parse(body, nullptr, /*allow_exceptions=*/false);
  if (request.is_discarded() || !request.is_object()) {
    return ErrorReply(400, "body must be a JSON object");
  }
  if (!request.contains("text") || !request["text"].is_string()) {
    return ErrorReply(400, "field 'text' must be a string");
  }
  const std::string text = request["text"].get<std::string>();
  if (text.empty() || Blank(text)) return ErrorReply(400, "text is empty");
  std::string session_id;
  if (request.contains("session_id")) {
    if (!request["session_id"].is_string()) {
      return ErrorReply(400, "field 'session_id' must be a string");
    }
    session_id = request["session_id"].get<std::string>();
  }

  Suggestion suggestion;
  try {
    suggestion = Suggest(text, pipeline_config_, *artifacts_);
  } catch (const Error& e) {
    return ErrorReply(500, e.what());
  }
  const std::string request_id = NextRequestId();

  json items = json::array();
  std::vector<std::string> ids;
  for (const SuggestionItem& item : suggestion.items) {
    items.push_back({{"rank", item.rank},
                     {"response_id", item.response_id},
                     {"text", item.display_text},
                     {"score", item.score}});
    ids.push_back(item.response_id);
  }
  json reply = {{"triggered", suggestion.triggered},
                {"trigger_score", suggestion.trigger_score},
                {"items", std::move(items)},
                {"request_id", request_id},
                {"latency_ms", suggestion.latency_ms}};

  json log_line = {{"request_id", request_id},
                   {"timestamp", UtcTimestamp()},
                   {"session_id", session_id},
                   {"text", text},
                   {"triggered", suggestion.triggered},
                   {"trigger_score", suggestion.trigger_score},
                   {"response_ids", ids},
                   {"latency_ms", suggestion.latency_ms}};
  {
    std::lock_guard<std::mutex> lock(mu_);
    issued_[request_id] = pipeline_config_.k;
    if (!session_id.empty()) session_of_[request_id] = session_id;
    AppendLine(request_log_, log_line.dump());
  }
  return {200, reply.dump()};
}

SuggestService::Reply SuggestService::HandleCanned() const {
  if (!loaded()) return ErrorReply(503, "artifacts not loaded");
  const CannedSet& canned = artifacts_->canned();
  std::vector<const CannedResponse*> sorted;
  for (const CannedResponse& r : canned.responses) sorted.push_back(&r);
  std::sort(sorted.begin(), sorted.end(),
            [](const CannedResponse* a, const CannedResponse* b) {
              return a->id < b->id;
            });
  json responses = json::array();
  for (const CannedResponse* r : sorted) {
    json rule_ids = json::array();
    for (const ResponseVariant& v : r->variants) rule_ids.push_back(v.rule_id);
    responses.push_back({{"id", r->id},
                         {"text", r->text},
                         {"cluster_id", r->cluster_id},
                         {"rule_ids", rule_ids}});
  }
  return {200, json{{"responses", responses},
                    {"k_selected", canned.k_selected},
                    {"density_threshold", canned.density_threshold}}
                   .dump()};
}

SuggestService::Reply SuggestService::HandleFeedback(std::string_view body) {
  if (!loaded()) return ErrorReply(503, "artifacts not loaded");
  if (body.size() > config_.max_body_bytes) {
    return ErrorReply(413, "request body too large");
  }
  json request = json::parse(body, nullptr, /*allow_exceptions=*/false);
  if (request.is_discarded() || !request.is_object() ||
      !request.contains("request_id") || !request["request_id"].is_string()) {
    return ErrorReply(400, "field 'request_id' must be a string");
  }
  SelectionEvent event;
  event.request_id = request["request_id"].get<std::string>();
  if (request.contains("chosen_rank") && !request["chosen_rank"].is_null()) {
    if (!request["chosen_rank"].is_number_integer()) {
      return ErrorReply(400, "chosen_rank must be an integer or null");
    }
    event.chosen_rank = request["chosen_rank"].get<int>();
  }
  if (request.contains("session_id") && request["session_id"].is_string()) {
    event.session_id = request["session_id"].get<std::string>();
  }
  event.timestamp = request.contains("timestamp") && request["timestamp"].is_string()
                        ? request["timestamp"].get<std::string>()
                        : UtcTimestamp();

  std::lock_guard<std::mutex> lock(mu_);
  auto issued = issued_.find(event.request_id);
  if (issued == issued_.end()) return ErrorReply(404, "unknown request_id");
  if (event.chosen_rank &&
      (*event.chosen_rank < 1 ||
       static_cast<size_t>(*event.chosen_rank) > issued->second)) {
    return ErrorReply(400, "chosen_rank must lie in [1, k]");
  }
  if (event.session_id.empty()) {
    if (auto s = session_of_.find(event.request_id); s != session_of_.end()) {
      event.session_id = s->second;
    }
  }
  selections_.push_back(event);
  // persisted only for sessions that opted in; never carries patient text
  if (!event.session_id.empty()) {
    AppendLine(selection_log_,
               json{{"request_id", event.request_id},
                    {"chosen_rank", event.chosen_rank ? json(*event.chosen_rank)
                                                      : json()},
                    {"timestamp", event.timestamp},
                    {"session_id", event.session_id}}
                   .dump());
  }
  return {204, ""};
}

SuggestService::Reply SuggestService::HandleHealth() const {
  const double uptime = std::chrono::duration<double>(
                            std::chrono::steady_clock::now() - started_)
                            .count();
  json fingerprints = json::object();
  if (loaded()) {
    for (const auto& [name, fp] : artifacts_->fingerprints()) fingerprints[name] = fp;
  }
  const size_t k = loaded() ? pipeline_config_.k : 3;
  return {200, json{{"status", loaded() ? "ok" : "loading"},
                    {"fingerprints", fingerprints},
                    {"uptime_s", uptime},
                    {"requests", request_counter_.load()},
                    {"feedback_events", feedback_count()},
                    {"online_precision_at_k", OnlinePrecisionAtK(k)}}
                   .dump()};
}

double SuggestService::OnlinePrecisionAtK(size_t k) const {
  std::lock_guard<std::mutex> lock(mu_);
  if (selections_.empty()) return 0.0;
  const auto hits = std::count_if(
      selections_.begin(), selections_.end(), [k](const SelectionEvent& e) {
        return e.chosen_rank && static_cast<size_t>(*e.chosen_rank) <= k;
      });
  return static_cast<double>(hits) / static_cast<double>(selections_.size());
}

size_t SuggestService::feedback_count() const {
  std::lock_guard<std::mutex> lock(mu_);
  return selections_.size();
}

void SuggestService::SetupRoutes() {
  server_ = std::make_unique<httplib::Server>();
  const int threads = config_.worker_threads;
  server_->new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
  server_->set_payload_max_length(config_.max_body_bytes);
  auto send = [](httplib::Response& res, const Reply& reply) {
    res.status = reply.status;
    if (!reply.body.empty()) res.set_content(reply.body, "application/json");
  };
  server_->Post("/suggest", [this, send](const httplib::Request& req,
                                         httplib::Response& res) {
    send(res, HandleSuggest(req.body));
  });
  server_->Get("/canned", [this, send](const httplib::Request&,
                                       httplib::Response& res) {
    send(res, HandleCanned());
  });
  server_->Post("/feedback", [this, send](const httplib::Request& req,
                                          httplib::Response& res) {
    send(res, HandleFeedback(req.body));
  });
  server_->Get("/health", [this, send](const httplib::Request&,
                                       httplib::Response& res) {
    send(res, HandleHealth());
  });
}

bool SuggestService::Listen() {
  SetupRoutes();
  return server_->listen(config_.host, config_.port);
}

int SuggestService::BindToAnyPort() {
  SetupRoutes();
  return server_->bind_to_any_port(config_.host);
}

bool SuggestService::ListenAfterBind() {
  if (!server_) return false;
  return server_->listen_after_bind();
}

void SuggestService::Stop() {
  if (server_) server_->stop();
}

}  // namespace medreply
