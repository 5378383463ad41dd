/*
 Copyright 2026 The speechcoach Authors
 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      http://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/

#include "speechcoach/service.hpp"

#include <fmt/format.h>
#include <httplib.h>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <random>

namespace speechcoach {

using nlohmann::json;

SentenceCatalog::SentenceCatalog(std::vector<SentenceEntry> entries) : entries_(std::move(entries)) {}

SentenceCatalog SentenceCatalog::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError(fmt::format("sentence catalog not found: {}", path.string()));
  std::vector<SentenceEntry> entries;
  try {
    const json j = json::parse(in);
    for (const auto& e : j.at("sentences")) {
      SentenceEntry entry{e.at("sentence_id").get<std::string>(), e.at("text").get<std::string>(), std::nullopt};
      if (e.contains("model_audio") && !e.at("model_audio").is_null()) {
        std::filesystem::path p = e.at("model_audio").get<std::string>();
        entry.model_audio = p.is_absolute() ? p : path.parent_path() / p;
      }
      entries.push_back(std::move(entry));
    }
  } catch (const json::exception& e) {
    throw InputError(fmt::format("malformed sentence catalog: {}", e.what()));
  }
  return SentenceCatalog(std::move(entries));
}

const SentenceEntry* SentenceCatalog::find(const std::string& sentence_id) const {
  for (const auto& e : entries_) {
    if (e.sentence_id == sentence_id) return &e;
  }
  return nullptr;
}

ServiceConfig ServiceConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError(fmt::format("service config not found: {}", path.string()));
  ServiceConfig cfg;
  const auto base = path.parent_path();
  auto resolve = [&base](const std::string& p) {
    std::filesystem::path fp(p);
    return fp.is_absolute() ? fp : base / fp;
  };
  try {
    const json j = json::parse(in);
    cfg.host = j.value("host", cfg.host);
    cfg.port = j.value("port", cfg.port);
    if (j.contains("model")) cfg.model = resolve(j.at("model").get<std::string>());
    if (j.contains("sentences")) cfg.sentences = resolve(j.at("sentences").get<std::string>());
    if (j.contains("session_db")) cfg.session_db = resolve(j.at("session_db").get<std::string>());
    if (j.contains("static_dir")) cfg.static_dir = resolve(j.at("static_dir").get<std::string>());
    cfg.analysis.diff.z_threshold = j.value("z_threshold", cfg.analysis.diff.z_threshold);
    cfg.analysis.diff.merge_gap_chunks = j.value("merge_gap_chunks", cfg.analysis.diff.merge_gap_chunks);
    cfg.analysis.diff.proficiency_threshold = j.value("proficiency_threshold", cfg.analysis.diff.proficiency_threshold);
    cfg.analysis.silence_peak_floor = j.value("silence_peak_floor", cfg.analysis.silence_peak_floor);
  } catch (const json::exception& e) {
    throw InputError(fmt::format("malformed service config: {}", e.what()));
  }
  return cfg;
}

void ServiceConfig::apply_env() {
  if (const char* m = std::getenv("SPEECHCOACH_MODEL"); m && *m && model.empty()) model = m;
}

json error_body(const std::string& code, const std::string& message) {
  return {{"code", code}, {"message", message}};
}

std::string random_id() {
  thread_local std::mt19937_64 rng([] {
    std::random_device rd;
    return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  }());
  return fmt::format("{:016x}{:016x}", rng(), rng());
}

PracticeService::PracticeService(std::shared_ptr<const ModelContainer> model, SentenceCatalog catalog,
                                 std::shared_ptr<SessionStore> store, AnalysisConfig cfg)
    : catalog_(std::move(catalog)), store_(std::move(store)) {
  if (!store_) throw InputError("practice service needs a session store");
  if (!model) {
    model_error_ = "no model checkpoint is loaded";
    return;
  }
  try {
    analyzer_ = std::make_unique<Analyzer>(std::move(model), cfg);
  } catch (const ModelError& e) {
    // Details may name server-side paths; they go to the log, not to clients.
    fmt::print(stderr, "model unavailable: {}\n", e.what());
    model_error_ = "the loaded model is incomplete or unusable";
  }
}

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message) {
  send_json(res, status, error_body(code, message));
}

std::optional<std::string> field(const httplib::Request& req, const std::string& name) {
  if (req.has_file(name)) return req.get_file_value(name).content;
  if (req.has_param(name)) return req.get_param_value(name);
  return std::nullopt;
}

std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

}  // namespace

void PracticeService::mount(httplib::Server& server) const {
  server.Get("/api/health", [this](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, {{"status", "ok"}, {"model_loaded", model_loaded()}, {"schema_version", kSchemaVersion}});
  });

  server.Get("/api/sentences", [this](const httplib::Request&, httplib::Response& res) {
    json list = json::array();
    for (const auto& e : catalog_.entries()) {
      list.push_back({{"sentence_id", e.sentence_id}, {"text", e.text}, {"has_model_audio", e.model_audio.has_value()}});
    }
    send_json(res, 200, {{"schema_version", kSchemaVersion}, {"sentences", list}});
  });

  server.Get(R"(/api/model_audio/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    const SentenceEntry* entry = catalog_.find(id);
    if (!entry) return send_error(res, 404, "unknown_sentence", fmt::format("no sentence '{}'", id));
    if (!entry->model_audio) return send_error(res, 404, "no_model_audio", fmt::format("sentence '{}' has no model audio", id));
    std::ifstream in(*entry->model_audio, std::ios::binary);
    if (!in) return send_error(res, 404, "no_model_audio", fmt::format("model audio for '{}' is unavailable", id));
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    res.status = 200;
    res.set_content(std::move(bytes), "audio/wav");
  });

  server.Post("/api/session", [this](const httplib::Request& req, httplib::Response& res) {
    std::string sentence_id;
    try {
      sentence_id = json::parse(req.body).at("sentence_id").get<std::string>();
    } catch (const json::exception&) {
      return send_error(res, 400, "bad_request", "expected a JSON body with sentence_id");
    }
    if (!catalog_.find(sentence_id)) {
      return send_error(res, 404, "unknown_sentence", fmt::format("no sentence '{}'", sentence_id));
    }
    const std::string session_id = random_id();
    store_->ensure_session(session_id, sentence_id);
    send_json(res, 200, {{"session_id", session_id}, {"sentence_id", sentence_id}});
  });

  server.Get(R"(/api/session/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    const auto rec = store_->get(id);
    if (!rec) return send_error(res, 404, "unknown_session", fmt::format("no session '{}'", id));
    send_json(res, 200, rec->to_json());
  });

  server.Post("/api/analyze", [this](const httplib::Request& req, httplib::Response& res) {
    const auto session_id = field(req, "session_id");
    const auto sentence_id = field(req, "sentence_id");
    if (!session_id || session_id->empty() || !sentence_id || sentence_id->empty()) {
      return send_error(res, 400, "bad_request", "session_id and sentence_id are required");
    }
    if (!catalog_.find(*sentence_id)) {
      return send_error(res, 404, "unknown_sentence", fmt::format("no sentence '{}'", *sentence_id));
    }
    if (!analyzer_) return send_error(res, 503, "model_not_loaded", model_error_);

    const std::string& payload = req.has_file("audio") ? req.get_file_value("audio").content : req.body;
    AudioClip clip;
    try {
      clip = decode_wav(std::span(reinterpret_cast<const std::uint8_t*>(payload.data()), payload.size()));
    } catch (const InputError& e) {
      return send_error(res, 400, "undecodable_audio", e.what());
    }

    AnalysisResult result;
    try {
      result = analyzer_->analyze(clip);
    } catch (const SilentInputError& e) {
      return send_error(res, 400, "silent_input", e.what());
    } catch (const InputError& e) {
      return send_error(res, 400, "unsupported_audio", e.what());
    }
    result.result_id = random_id();
    result.sentence_id = *sentence_id;
    result.timestamp_ms = now_ms();
    try {
      store_->ensure_session(*session_id, *sentence_id);
      result = store_->append(*session_id, std::move(result));
    } catch (const SessionMismatchError& e) {
      return send_error(res, 400, "sentence_mismatch", e.what());
    }
    send_json(res, 200, result.to_json());
  });

  server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      fmt::print(stderr, "request failed: {}\n", e.what());
    } catch (...) {
    }
    send_error(res, 500, "internal_error", "internal error");
  });
}

}  // namespace speechcoach
