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

#ifndef SPEECHCOACH_SERVICE_HPP_
#define SPEECHCOACH_SERVICE_HPP_

#include "speechcoach/analysis.hpp"
#include "speechcoach/session_store.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>

namespace httplib {
class Server;
}

namespace speechcoach {

struct SentenceEntry {
  std::string sentence_id;
  std::string text;
  // Playback-only exemplar; analysis never compares against it.
  std::optional<std::filesystem::path> model_audio;
};

/*
 Sentence catalog file (JSON):

   {"sentences": [{"sentence_id": "s1", "text": "...", "model_audio": "audio/s1.wav"}, ...]}

 model_audio is optional; relative paths resolve against the catalog's directory.
*/
class SentenceCatalog {
 public:
  SentenceCatalog() = default;
  explicit SentenceCatalog(std::vector<SentenceEntry> entries);
  static SentenceCatalog load(const std::filesystem::path& path);

  const SentenceEntry* find(const std::string& sentence_id) const;
  const std::vector<SentenceEntry>& entries() const { return entries_; }

 private:
  std::vector<SentenceEntry> entries_;
};

/*
 Service config file (JSON), every key optional:

   {"host": "127.0.0.1", "port": 8080, "model": "model.ckpt",
    "sentences": "sentences.json", "session_db": "sessions.db",
    "static_dir": "webui/dist",
    "z_threshold": 1.0, "merge_gap_chunks": 1, "proficiency_threshold": 0.8,
    "silence_peak_floor": 0.001}

 Relative paths resolve against the config file's directory. The model path
 may also come from SPEECHCOACH_MODEL.
*/
struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::filesystem::path model;
  std::filesystem::path sentences;
  std::filesystem::path session_db = "sessions.db";
  std::filesystem::path static_dir;
  AnalysisConfig analysis;

  static ServiceConfig load(const std::filesystem::path& path);
  void apply_env();
};

// JSON error body: {"code": "<machine-readable>", "message": "<human-readable>"}.
nlohmann::json error_body(const std::string& code, const std::string& message);

/*
 Endpoints:
   GET  /api/health                  {"status": "ok", "model_loaded": bool}
   GET  /api/sentences               {"sentences": [{"sentence_id", "text", "has_model_audio"}]}
   GET  /api/model_audio/{sentence}  audio/wav
   POST /api/session                 body {"sentence_id"} -> {"session_id", "sentence_id"}
   GET  /api/session/{session}       SessionRecord
   POST /api/analyze                 multipart fields session_id, sentence_id, audio (file);
                                     or a raw WAV body with ?session_id=&sentence_id=
*/
class PracticeService {
 public:
  // `model` may be null; analysis then answers 503.
  PracticeService(std::shared_ptr<const ModelContainer> model, SentenceCatalog catalog,
                  std::shared_ptr<SessionStore> store, AnalysisConfig cfg = {});

  void mount(httplib::Server& server) const;

  bool model_loaded() const { return analyzer_ != nullptr; }

 private:
  std::unique_ptr<Analyzer> analyzer_;
  std::string model_error_;
  SentenceCatalog catalog_;
  std::shared_ptr<SessionStore> store_;
};

std::string random_id();

}  // namespace speechcoach

#endif  // SPEECHCOACH_SERVICE_HPP_
