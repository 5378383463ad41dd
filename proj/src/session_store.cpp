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

#include "speechcoach/session_store.hpp"

#include <fmt/format.h>
#include <sqlite3.h>

namespace speechcoach {

using nlohmann::json;

json SessionRecord::to_json() const {
  json results_j = json::array();
  for (const auto& r : results) results_j.push_back(r.to_json());
  return {{"schema_version", kSchemaVersion},
          {"session_id", session_id},
          {"sentence_id", sentence_id},
          {"results", std::move(results_j)}};
}

namespace {

class Statement {
 public:
  Statement(sqlite3* db, const char* sql) {
    if (sqlite3_prepare_v2(db, sql, -1, &stmt_, nullptr) != SQLITE_OK) {
      throw Error(fmt::format("sqlite prepare failed: {}", sqlite3_errmsg(db)));
    }
  }
  ~Statement() { sqlite3_finalize(stmt_); }
  Statement(const Statement&) = delete;
  Statement& operator=(const Statement&) = delete;

  Statement& bind(int idx, const std::string& v) {
    sqlite3_bind_text(stmt_, idx, v.c_str(), static_cast<int>(v.size()), SQLITE_TRANSIENT);
    return *this;
  }
  Statement& bind(int idx, std::int64_t v) {
    sqlite3_bind_int64(stmt_, idx, v);
    return *this;
  }
  bool step() {
    const int rc = sqlite3_step(stmt_);
    if (rc == SQLITE_ROW) return true;
    if (rc == SQLITE_DONE) return false;
    throw Error(fmt::format("sqlite step failed: {}", sqlite3_errmsg(sqlite3_db_handle(stmt_))));
  }
  std::string text(int col) const {
    const auto* p = reinterpret_cast<const char*>(sqlite3_column_text(stmt_, col));
    return p ? std::string(p, static_cast<std::size_t>(sqlite3_column_bytes(stmt_, col))) : std::string();
  }
  std::int64_t int64(int col) const { return sqlite3_column_int64(stmt_, col); }

 private:
  sqlite3_stmt* stmt_ = nullptr;
};

void exec(sqlite3* db, const char* sql) {
  char* err = nullptr;
  if (sqlite3_exec(db, sql, nullptr, nullptr, &err) != SQLITE_OK) {
    std::string msg = err ? err : "unknown error";
    sqlite3_free(err);
    throw Error(fmt::format("sqlite: {}", msg));
  }
}

}  // namespace

SessionStore::SessionStore(const std::filesystem::path& db_path) {
  if (sqlite3_open_v2(db_path.string().c_str(), &db_,
                      SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE | SQLITE_OPEN_FULLMUTEX, nullptr) != SQLITE_OK) {
    std::string msg = db_ ? sqlite3_errmsg(db_) : "out of memory";
    sqlite3_close(db_);
    throw Error(fmt::format("cannot open session store {}: {}", db_path.string(), msg));
  }
  exec(db_, "PRAGMA journal_mode=WAL;");
  exec(db_, "PRAGMA synchronous=FULL;");
  exec(db_,
       "CREATE TABLE IF NOT EXISTS sessions ("
       " session_id TEXT PRIMARY KEY, sentence_id TEXT NOT NULL);"
       "CREATE TABLE IF NOT EXISTS results ("
       " session_id TEXT NOT NULL REFERENCES sessions(session_id),"
       " seq INTEGER NOT NULL, timestamp_ms INTEGER NOT NULL, payload TEXT NOT NULL,"
       " PRIMARY KEY (session_id, seq));");
}

SessionStore::~SessionStore() { sqlite3_close(db_); }

std::mutex& SessionStore::lock_for(const std::string& session_id) {
  std::lock_guard guard(map_mutex_);
  auto& slot = session_locks_[session_id];
  if (!slot) slot = std::make_unique<std::mutex>();
  return *slot;
}

void SessionStore::ensure_session(const std::string& session_id, const std::string& sentence_id) {
  std::lock_guard session_guard(lock_for(session_id));
  std::lock_guard guard(db_mutex_);
  Statement find(db_, "SELECT sentence_id FROM sessions WHERE session_id = ?1;");
  find.bind(1, session_id);
  if (find.step()) {
    if (find.text(0) != sentence_id) {
      throw SessionMismatchError(fmt::format("session '{}' belongs to sentence '{}'", session_id, find.text(0)));
    }
    return;
  }
  Statement insert(db_, "INSERT INTO sessions (session_id, sentence_id) VALUES (?1, ?2);");
  insert.bind(1, session_id).bind(2, sentence_id).step();
}

AnalysisResult SessionStore::append(const std::string& session_id, AnalysisResult result) {
  std::lock_guard session_guard(lock_for(session_id));
  std::lock_guard guard(db_mutex_);
  exec(db_, "BEGIN IMMEDIATE;");
  try {
    Statement find(db_, "SELECT sentence_id FROM sessions WHERE session_id = ?1;");
    find.bind(1, session_id);
    if (!find.step()) throw InputError(fmt::format("unknown session '{}'", session_id));
    if (find.text(0) != result.sentence_id) {
      throw SessionMismatchError(fmt::format("session '{}' belongs to sentence '{}'", session_id, find.text(0)));
    }
    Statement last(db_, "SELECT COALESCE(MAX(seq), -1), COALESCE(MAX(timestamp_ms), -1) FROM results WHERE session_id = ?1;");
    last.bind(1, session_id);
    last.step();
    const std::int64_t seq = last.int64(0) + 1;
    result.timestamp_ms = std::max(result.timestamp_ms, last.int64(1) + 1);
    Statement insert(db_, "INSERT INTO results (session_id, seq, timestamp_ms, payload) VALUES (?1, ?2, ?3, ?4);");
    insert.bind(1, session_id).bind(2, seq).bind(3, result.timestamp_ms).bind(4, result.to_json().dump()).step();
    exec(db_, "COMMIT;");
  } catch (...) {
    exec(db_, "ROLLBACK;");
    throw;
  }
  return result;
}

std::optional<SessionRecord> SessionStore::get(const std::string& session_id) const {
  std::lock_guard guard(db_mutex_);
  Statement find(db_, "SELECT sentence_id FROM sessions WHERE session_id = ?1;");
  find.bind(1, session_id);
  if (!find.step()) return std::nullopt;
  SessionRecord rec{session_id, find.text(0), {}};
  Statement rows(db_, "SELECT payload FROM results WHERE session_id = ?1 ORDER BY seq;");
  rows.bind(1, session_id);
  while (rows.step()) rec.results.push_back(AnalysisResult::from_json(json::parse(rows.text(0))));
  return rec;
}

}  // namespace speechcoach
