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

#include "api_fixture.hpp"
#include "speechcoach/audio.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <fstream>

using namespace speechcoach;
using nlohmann::json;
using testing::LiveServer;
using testing::TempDir;

namespace {

struct Env {
  TempDir dir{"api"};
  SentenceCatalog catalog;
  std::shared_ptr<SessionStore> store;

  Env() {
    write_wav(dir / "exemplar.wav", testing::tone(1.0, 300.0));
    catalog = SentenceCatalog({{"s1", "The quick brown fox.", dir / "exemplar.wav"}, {"s2", "Hello there.", std::nullopt}});
    store = std::make_shared<SessionStore>(dir / "sessions.db");
  }
};

std::shared_ptr<const ModelContainer> model() {
  return std::make_shared<const ModelContainer>(testing::untrained_model());
}

std::string wav_body(const AudioClip& clip) {
  const auto b = encode_wav_pcm16(clip);
  return {b.begin(), b.end()};
}

httplib::Result analyze(httplib::Client& c, const std::string& session, const std::string& sentence,
                        const std::string& audio) {
  httplib::MultipartFormDataItems items = {
      {"session_id", session, "", ""}, {"sentence_id", sentence, "", ""}, {"audio", audio, "take.wav", "audio/wav"}};
  return c.Post("/api/analyze", items);
}

std::string new_session(httplib::Client& c, const std::string& sentence) {
  auto r = c.Post("/api/session", json{{"sentence_id", sentence}}.dump(), "application/json");
  REQUIRE(r);
  REQUIRE(r->status == 200);
  return json::parse(r->body).at("session_id").get<std::string>();
}

}  // namespace

TEST_CASE("health and sentence listing") {
  Env env;
  LiveServer srv(model(), env.catalog, env.store);
  auto c = srv.client();
  auto r = c.Get("/api/health");
  REQUIRE(r);
  CHECK(json::parse(r->body)["model_loaded"] == true);
  r = c.Get("/api/sentences");
  REQUIRE(r);
  CHECK(r->status == 200);
  const auto list = json::parse(r->body)["sentences"];
  REQUIRE(list.size() == 2);
  CHECK(list[0]["has_model_audio"] == true);
  CHECK(list[1]["has_model_audio"] == false);
  // Server-side paths stay private.
  CHECK(r->body.find(env.dir.path().string()) == std::string::npos);
  CHECK(r->body.find("exemplar.wav") == std::string::npos);
}

TEST_CASE("model audio streams and unknown sentences are 404") {
  Env env;
  LiveServer srv(model(), env.catalog, env.store);
  auto c = srv.client();
  auto r = c.Get("/api/model_audio/s1");
  REQUIRE(r);
  CHECK(r->status == 200);
  CHECK(r->get_header_value("Content-Type") == "audio/wav");
  CHECK(decode_wav(std::span(reinterpret_cast<const std::uint8_t*>(r->body.data()), r->body.size())).samples.size() == 16000);
  r = c.Get("/api/model_audio/nope");
  CHECK(r->status == 404);
  CHECK(json::parse(r->body)["code"] == "unknown_sentence");
  r = c.Get("/api/model_audio/s2");
  CHECK(r->status == 404);
  CHECK(json::parse(r->body)["code"] == "no_model_audio");
}

TEST_CASE("analyze then history round trip") {
  Env env;
  LiveServer srv(model(), env.catalog, env.store);
  auto c = srv.client();
  const auto session = new_session(c, "s1");

  auto h = c.Get("/api/session/" + session);
  REQUIRE(h);
  CHECK(h->status == 200);
  CHECK(json::parse(h->body)["results"].empty());

  const auto audio = wav_body(testing::tone(4.0, 210.0, 0.5));
  auto r1 = analyze(c, session, "s1", audio);
  REQUIRE(r1);
  REQUIRE(r1->status == 200);
  const auto a = json::parse(r1->body);
  CHECK(a["schema_version"] == 1);
  CHECK(a["sentence_id"] == "s1");
  CHECK(AnalysisResult::from_json(a).waveform_preview.size() == 1000);

  auto r2 = analyze(c, session, "s1", audio);
  const auto b = json::parse(r2->body);
  CHECK(a["score"] == b["score"]);
  CHECK(a["segments"] == b["segments"]);
  CHECK(a["point"] == b["point"]);
  CHECK(a["result_id"] != b["result_id"]);
  CHECK(a["timestamp_ms"] != b["timestamp_ms"]);

  auto r3 = analyze(c, session, "s1", wav_body(testing::tone(2.5, 330.0, 0.3)));
  REQUIRE(r3->status == 200);

  h = c.Get("/api/session/" + session);
  const auto hist = json::parse(h->body);
  REQUIRE(hist["results"].size() == 3);
  CHECK(hist["results"][0] == a);
  CHECK(hist["results"][1] == b);
  CHECK(hist["results"][2]["result_id"] == json::parse(r3->body)["result_id"]);
  CHECK(hist["session_id"] == session);
}

TEST_CASE("raw WAV body with query parameters is accepted") {
  Env env;
  LiveServer srv(model(), env.catalog, env.store);
  auto c = srv.client();
  auto r = c.Post("/api/analyze?session_id=raw1&sentence_id=s2", wav_body(testing::tone(4.0)), "audio/wav");
  REQUIRE(r);
  CHECK(r->status == 200);
  CHECK(json::parse(c.Get("/api/session/raw1")->body)["results"].size() == 1);
}

TEST_CASE("analysis error contract") {
  Env env;
  LiveServer srv(model(), env.catalog, env.store);
  auto c = srv.client();
  const auto session = new_session(c, "s1");

  auto r = analyze(c, session, "s1", wav_body(testing::silence(4.0)));
  REQUIRE(r);
  CHECK(r->status == 400);
  CHECK(json::parse(r->body)["code"] == "silent_input");
  CHECK(json::parse(r->body).contains("message"));

  r = analyze(c, session, "nope", wav_body(testing::tone(4.0)));
  CHECK(r->status == 404);
  CHECK(json::parse(r->body)["code"] == "unknown_sentence");

  r = analyze(c, session, "s1", "this is not audio");
  CHECK(r->status == 400);
  CHECK(json::parse(r->body)["code"] == "undecodable_audio");

  r = analyze(c, session, "s2", wav_body(testing::tone(4.0)));
  CHECK(r->status == 400);
  CHECK(json::parse(r->body)["code"] == "sentence_mismatch");

  r = c.Post("/api/analyze", "", "audio/wav");
  CHECK(r->status == 400);
  CHECK(json::parse(r->body)["code"] == "bad_request");

  r = c.Get("/api/session/unknown");
  CHECK(r->status == 404);
  CHECK(json::parse(r->body)["code"] == "unknown_session");

  r = c.Post("/api/session", json{{"sentence_id", "nope"}}.dump(), "application/json");
  CHECK(r->status == 404);

  // Failed analyses leave no trace in the history.
  CHECK(json::parse(c.Get("/api/session/" + session)->body)["results"].empty());
}

TEST_CASE("without a model, analysis answers 503 and the rest still works") {
  Env env;
  LiveServer srv(nullptr, env.catalog, env.store);
  auto c = srv.client();
  CHECK(json::parse(c.Get("/api/health")->body)["model_loaded"] == false);
  auto r = analyze(c, "x", "s1", wav_body(testing::tone(4.0)));
  CHECK(r->status == 503);
  CHECK(json::parse(r->body)["code"] == "model_not_loaded");
  CHECK(c.Get("/api/sentences")->status == 200);
}

TEST_CASE("an unusable model is reported without leaking details") {
  Env env;
  auto broken = testing::untrained_model();
  broken.metric.reset();
  LiveServer srv(std::make_shared<const ModelContainer>(broken), env.catalog, env.store);
  auto c = srv.client();
  auto r = analyze(c, "x", "s1", wav_body(testing::tone(4.0)));
  CHECK(r->status == 503);
  CHECK(r->body.find("metric") == std::string::npos);
}

TEST_CASE("history survives a service restart") {
  Env env;
  std::string session;
  {
    LiveServer srv(model(), env.catalog, env.store);
    auto c = srv.client();
    session = new_session(c, "s1");
    REQUIRE(analyze(c, session, "s1", wav_body(testing::tone(4.0)))->status == 200);
  }
  env.store.reset();
  LiveServer again(model(), env.catalog, std::make_shared<SessionStore>(env.dir / "sessions.db"));
  auto c = again.client();
  const auto hist = json::parse(c.Get("/api/session/" + session)->body);
  CHECK(hist["results"].size() == 1);
}

TEST_CASE("concurrent analyses on separate sessions") {
  Env env;
  LiveServer srv(model(), env.catalog, env.store);
  const auto audio = wav_body(testing::tone(4.0, 240.0));
  std::vector<std::thread> threads;
  std::atomic<int> ok{0};
  for (int t = 0; t < 3; ++t) {
    threads.emplace_back([&, t] {
      auto c = srv.client();
      for (int i = 0; i < 2; ++i) ok += analyze(c, "c" + std::to_string(t), "s1", audio)->status == 200;
    });
  }
  for (auto& th : threads) th.join();
  CHECK(ok == 6);
  auto c = srv.client();
  for (int t = 0; t < 3; ++t) CHECK(json::parse(c.Get("/api/session/c" + std::to_string(t))->body)["results"].size() == 2);
}

TEST_CASE("error body shape") {
  const auto b = error_body("silent_input", "no signal");
  CHECK(b["code"] == "silent_input");
  CHECK(b["message"] == "no signal");
  CHECK(b.size() == 2);
  CHECK(random_id() != random_id());
}
