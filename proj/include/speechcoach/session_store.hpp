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

#ifndef SPEECHCOACH_SESSION_STORE_HPP_
#define SPEECHCOACH_SESSION_STORE_HPP_

#include "speechcoach/analysis.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

struct sqlite3;

namespace speechcoach {

struct SessionRecord {
  std::string session_id;
  std::string sentence_id;
  std::vector<AnalysisResult> results;  // submission order

  nlohmann::json to_json() const;
};

class SessionMismatchError : public InputError {
 public:
  explicit SessionMismatchError(const std::string& what) : InputError(what) {}
};

// Single-file SQLite store of practice sessions. Appends are serialized per
// session and each is its own transaction, so results survive restarts.
class SessionStore {
 public:
  explicit SessionStore(const std::filesystem::path& db_path);
  ~SessionStore();
  SessionStore(const SessionStore&) = delete;
  SessionStore& operator=(const SessionStore&) = delete;

  // Creates the session if absent. Throws SessionMismatchError when it
  // already exists for a different sentence.
  void ensure_session(const std::string& session_id, const std::string& sentence_id);

  // Appends and returns the stored result; the timestamp is bumped when
  // needed so that results stay strictly time-ordered within the session.
  AnalysisResult append(const std::string& session_id, AnalysisResult result);

  std::optional<SessionRecord> get(const std::string& session_id) const;

 private:
  std::mutex& lock_for(const std::string& session_id);

  sqlite3* db_ = nullptr;
  mutable std::mutex db_mutex_;
  std::mutex map_mutex_;
  std::map<std::string, std::unique_ptr<std::mutex>> session_locks_;
};

}  // namespace speechcoach

#endif  // SPEECHCOACH_SESSION_STORE_HPP_
