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

// Drives the command-line tool as a subprocess.

#include "speechcoach/analysis.hpp"
#include "test_support.hpp"

#include <doctest.h>
#include <httplib.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <sys/wait.h>

using namespace speechcoach;
using nlohmann::json;

namespace {

struct RunResult {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class Workspace {
 public:
  static Workspace& get() {
    static Workspace w;
    return w;
  }

  RunResult run(const std::string& args) const {
    const auto err_path = dir_ / "stderr.txt";
    const std::string cmd = std::string(SPEECHCOACH_CLI) + " " + args + " 2> " + err_path.string();
    RunResult r;
    FILE* pipe = ::popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::array<char, 4096> buf{};
    std::size_t n = 0;
    while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
    const int status = ::pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.err = slurp(err_path);
    return r;
  }

  std::filesystem::path operator/(const std::string& name) const { return dir_ / name; }
  std::string manifest() const { return (dir_ / "corpus" / "manifest.jsonl").string(); }
  std::string model() const { return (dir_ / "model.ckpt").string(); }

 private:
  Workspace() : tmp_("cli"), dir_(tmp_.path()) {
    const auto synth = run("synth-corpus --out " + (dir_ / "corpus").string() +
                           " --train-per-class 8 --val-per-class 4 --test-per-class 4 --clips-per-speaker 2 --seed 3");
    REQUIRE(synth.code == 0);
    const std::string small = " --hidden 8 --attention-hidden 4 --epochs 3 --lr 0.01 --augment-copies 0";
    REQUIRE(run("train-scorer --manifest " + manifest() + " --out " + model() + " --seed 7" + small).code == 0);
    REQUIRE(run("calibrate --model " + model() + " --manifest " + manifest()).code == 0);
    REQUIRE(run("train-metric --model " + model() + " --manifest " + manifest() +
                " --hidden 8 --projection-hidden 16 --epochs 3 --lr 0.01 --seed 7")
                .code == 0);
  }

  testing::TempDir tmp_;
  std::filesystem::path dir_;
};

}  // namespace

TEST_CASE("train-scorer with a fixed seed writes byte-identical checkpoints") {
  auto& w = Workspace::get();
  const std::string common = "train-scorer --manifest " + w.manifest() +
                             " --seed 7 --hidden 8 --attention-hidden 4 --epochs 2 --lr 0.01 --augment-copies 1 --out ";
  REQUIRE(w.run(common + (w / "a.ckpt").string()).code == 0);
  REQUIRE(w.run(common + (w / "b.ckpt").string()).code == 0);
  const auto a = slurp(w / "a.ckpt"), b = slurp(w / "b.ckpt");
  CHECK(!a.empty());
  CHECK(a == b);
}

TEST_CASE("analyze-file prints a valid AnalysisResult, identically across runs") {
  auto& w = Workspace::get();
  const std::string cmd = "analyze-file --model " + w.model() + " --audio " +
                          (w / "corpus" / "clips" / "test_nnt_0000.wav").string() + " --sentence-id s1";
  const auto a = w.run(cmd), b = w.run(cmd);
  REQUIRE(a.code == 0);
  CHECK(a.out == b.out);
  const auto result = AnalysisResult::from_json(json::parse(a.out));
  CHECK(result.sentence_id == "s1");
  CHECK(result.timestamp_ms == 0);
  CHECK(result.waveform_preview.size() == 1000);
}

TEST_CASE("evaluate reports all four metrics") {
  auto& w = Workspace::get();
  const auto r = w.run("evaluate --json --model " + w.model() + " --manifest " + w.manifest());
  REQUIRE(r.code == 0);
  const auto j = json::parse(r.out);
  for (const char* key : {"accuracy", "focal_loss", "ece", "triplet_satisfaction"}) CHECK(j.contains(key));
  CHECK(j["count"] == 8);
  const auto text = w.run("evaluate --model " + w.model() + " --manifest " + w.manifest());
  CHECK(text.out.find("accuracy:") != std::string::npos);
  CHECK(text.out.find("triplet_satisfaction:") != std::string::npos);
}

TEST_CASE("failures exit nonzero with a diagnostic") {
  auto& w = Workspace::get();
  auto r = w.run("analyze-file --model " + (w / "missing.ckpt").string() + " --audio x.wav");
  CHECK(r.code != 0);
  CHECK(r.err.find("error:") != std::string::npos);

  std::ofstream(w / "bad.jsonl") << "{\"clip_ref\": \"a.wav\", \"label\": \"fluent\", \"speaker_id\": \"s\", \"split\": \"train\"}\n";
  r = w.run("train-scorer --manifest " + (w / "bad.jsonl").string() + " --out " + (w / "x.ckpt").string());
  CHECK(r.code != 0);
  CHECK(r.err.find("line 1") != std::string::npos);

  r = w.run("calibrate --model " + (w / "missing.ckpt").string() + " --manifest " + w.manifest());
  CHECK(r.code != 0);

  r = w.run("analyze-file --model " + w.model() + " --audio " + (w / "nothing.wav").string());
  CHECK(r.code != 0);

  r = w.run("serve --model " + (w / "missing.ckpt").string() + " --db " + (w / "s.db").string());
  CHECK(r.code != 0);

  r = w.run("no-such-command");
  CHECK(r.code != 0);
}

TEST_CASE("serve refuses a port that is already in use") {
  auto& w = Workspace::get();
  httplib::Server blocker;
  const int port = blocker.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  const auto r = w.run("serve --model " + w.model() + " --db " + (w / "s.db").string() + " --host 127.0.0.1 --port " +
                       std::to_string(port));
  CHECK(r.code != 0);
  CHECK(r.err.find("port") != std::string::npos);
}

TEST_CASE("an incomplete model cannot be served") {
  auto& w = Workspace::get();
  REQUIRE(w.run("train-scorer --manifest " + w.manifest() + " --out " + (w / "partial.ckpt").string() +
                " --hidden 4 --attention-hidden 2 --epochs 1 --augment-copies 0")
              .code == 0);
  const auto r = w.run("serve --model " + (w / "partial.ckpt").string() + " --db " + (w / "s.db").string());
  CHECK(r.code != 0);
  CHECK(r.err.find("error:") != std::string::npos);
}
