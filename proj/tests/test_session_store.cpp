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
#include "test_support.hpp"

#include <doctest.h>

#include <thread>

using namespace speechcoach;
using testing::TempDir;

namespace {

AnalysisResult result(const std::string& id, std::int64_t ts) {
  AnalysisResult r;
  r.result_id = id;
  r.sentence_id = "s1";
  r.timestamp_ms = ts;
  r.score = {0.25, 25};
  r.predicted_label = Label::kNonNative;
  r.segments = {{0.3, 0.4, 1.0}};
  r.point = {3.0, 4.0};
  r.distance = 5.0;
  r.waveform_preview = {0.0f, 0.5f};
  return r;
}

}  // namespace

TEST_CASE("fresh session has an empty history; unknown sessions are absent") {
  TempDir dir("store");
  SessionStore store(dir / "s.db");
  CHECK(!store.get("nope"));
  store.ensure_session("a", "s1");
  const auto rec = store.get("a");
  REQUIRE(rec);
  CHECK(rec->results.empty());
  CHECK(rec->sentence_id == "s1");
  CHECK(rec->to_json()["results"].empty());
}

TEST_CASE("appends come back in order with increasing timestamps") {
  TempDir dir("store");
  SessionStore store(dir / "s.db");
  store.ensure_session("a", "s1");
  store.append("a", result("r1", 1000));
  store.append("a", result("r2", 1000));
  store.append("a", result("r3", 500));
  const auto rec = store.get("a");
  REQUIRE(rec->results.size() == 3);
  CHECK(rec->results[0].result_id == "r1");
  CHECK(rec->results[2].result_id == "r3");
  CHECK(rec->results[0].timestamp_ms < rec->results[1].timestamp_ms);
  CHECK(rec->results[1].timestamp_ms < rec->results[2].timestamp_ms);
  CHECK(rec->results[1].to_json()["point"] == result("r2", 0).to_json()["point"]);
}

TEST_CASE("a session stays bound to its sentence") {
  TempDir dir("store");
  SessionStore store(dir / "s.db");
  store.ensure_session("a", "s1");
  CHECK_NOTHROW(store.ensure_session("a", "s1"));
  CHECK_THROWS_AS(store.ensure_session("a", "s2"), SessionMismatchError);
  CHECK_THROWS_AS(store.append("missing", result("r", 1)), InputError);
}

TEST_CASE("results survive reopening the store") {
  TempDir dir("store");
  {
    SessionStore store(dir / "s.db");
    store.ensure_session("a", "s1");
    store.append("a", result("r1", 10));
    store.append("a", result("r2", 20));
  }
  SessionStore reopened(dir / "s.db");
  const auto rec = reopened.get("a");
  REQUIRE(rec);
  REQUIRE(rec->results.size() == 2);
  CHECK(rec->results[1].result_id == "r2");
  reopened.append("a", result("r3", 5));
  CHECK(reopened.get("a")->results.back().timestamp_ms > 20);
}

TEST_CASE("concurrent appends to one session are all kept") {
  TempDir dir("store");
  SessionStore store(dir / "s.db");
  store.ensure_session("a", "s1");
  store.ensure_session("b", "s1");
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t) {
    threads.emplace_back([&store, t] {
      for (int i = 0; i < 10; ++i) store.append(t % 2 ? "a" : "b", result(std::to_string(t * 100 + i), 1));
    });
  }
  for (auto& th : threads) th.join();
  const auto a = store.get("a")->results;
  CHECK(a.size() == 20);
  CHECK(store.get("b")->results.size() == 20);
  for (std::size_t i = 1; i < a.size(); ++i) CHECK(a[i - 1].timestamp_ms < a[i].timestamp_ms);
}
