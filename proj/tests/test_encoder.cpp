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

#include "speechcoach/encoder.hpp"
#include "speechcoach/types.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <cstring>

using namespace speechcoach;
using testing::TempDir;

namespace {

bool bit_identical(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

FeatureSequence seq_of(const Matrix& frames) { return FeatureSequence{frames, 0.02, 0.0125}; }

}  // namespace

TEST_CASE("canonical clip gives T = floor(N / hop) = 200 frames") {
  const auto enc = Encoder::load(EncoderConfig{});
  const auto feats = enc->encode(normalize(testing::tone(4.0)));
  // 64000 samples, 320-sample hop, frames zero-padded at the tail.
  CHECK(feats.num_frames() == 64000 / 320);
  CHECK(feats.num_frames() == 200);
  CHECK(frame_count(64000, 16000, 0.020) == 200);
  CHECK(feats.dim() == 80);
  CHECK(feats.frames.allFinite());
  CHECK(feats.frame_stride_s == doctest::Approx(0.020));
  CHECK(feats.frame_offset_s == doctest::Approx(0.0125));
}

TEST_CASE("all-zero clip maps every frame to the floor vector") {
  const auto enc = Encoder::load(EncoderConfig{});
  const auto feats = enc->encode(testing::silence(4.0));
  const double floor = std::log(kLogMelFloor);
  CHECK((feats.frames.array() == floor).all());
}

TEST_CASE("encoding is bit-identical across calls") {
  const auto enc = Encoder::load(EncoderConfig{});
  const auto clip = normalize(testing::tone(4.0, 310.0));
  CHECK(bit_identical(enc->encode(clip).frames, enc->encode(clip).frames));
}

TEST_CASE("encoder requires canonical input") {
  const auto enc = Encoder::load(EncoderConfig{});
  CHECK_THROWS_AS(enc->encode(testing::tone(2.0)), InputError);
}

TEST_CASE("log-mel energy peaks in the band holding a pure tone") {
  const auto frames = log_mel(normalize(testing::tone(4.0, 1000.0)), 80, 0.025, 0.020);
  Eigen::Index lo_band = 0, hi_band = 0;
  frames.row(50).maxCoeff(&lo_band);
  log_mel(normalize(testing::tone(4.0, 4000.0)), 80, 0.025, 0.020).row(50).maxCoeff(&hi_band);
  CHECK(hi_band > lo_band);
}

TEST_CASE("chunk: T=6, D=2, k=2") {
  Matrix f(6, 2);
  for (int t = 0; t < 6; ++t) f.row(t) << 10 * t, 10 * t + 1;
  const auto c = chunk(seq_of(f), 2);
  REQUIRE(c.num_chunks() == 3);
  REQUIRE(c.chunks.cols() == 4);
  Matrix expected0(1, 4);
  expected0 << 0, 1, 10, 11;
  CHECK(c.chunks.row(0) == expected0);
  CHECK(c.chunk_stride_s == doctest::Approx(0.04));
  CHECK(dechunk(c) == f);
}

TEST_CASE("chunk: k=1 is the identity") {
  std::mt19937_64 rng(1);
  const Matrix f = testing::random_matrix(7, 3, rng);
  CHECK(chunk(seq_of(f), 1).chunks == f);
}

TEST_CASE("chunk: T=5, k=2 drops the trailing frame") {
  Matrix f(5, 1);
  f << 1, 2, 3, 4, 5;
  const auto c = chunk(seq_of(f), 2);
  REQUIRE(c.num_chunks() == 2);
  Matrix expected(2, 2);
  expected << 1, 2, 3, 4;
  CHECK(c.chunks == expected);
  CHECK_THROWS_AS(chunk(seq_of(f), 6), InputError);
  CHECK_THROWS_AS(chunk(seq_of(f), 0), InputError);
}

TEST_CASE("default chunking gives 40 steps of width 400") {
  const auto enc = Encoder::load(EncoderConfig{});
  const auto c = chunk(enc->encode(normalize(testing::tone(4.0))), 5);
  CHECK(c.num_chunks() == 40);
  CHECK(c.chunks.cols() == 400);
  CHECK(c.chunk_stride_s == doctest::Approx(0.1));
}

TEST_CASE("config validation and JSON round trip") {
  EncoderConfig cfg;
  cfg.chunk_size_k = 0;
  CHECK_THROWS_AS(cfg.validate(), InputError);
  cfg = EncoderConfig{};
  cfg.frame_stride_s = 0.01;
  cfg.chunk_size_k = 3;
  const auto back = EncoderConfig::from_json(cfg.to_json());
  CHECK(back.hash() == cfg.hash());
  CHECK(back.chunk_size_k == 3);
  EncoderConfig other;
  CHECK(other.hash() != cfg.hash());
}

TEST_CASE("pretrained backend applies the frozen layers on top of log-mel") {
  TempDir dir("encoder");
  std::mt19937_64 rng(11);
  EncoderLayer l1{testing::random_matrix(6, 80, rng, 0.1), testing::random_matrix(6, 1, rng), "tanh"};
  EncoderLayer l2{testing::random_matrix(3, 6, rng), testing::random_matrix(3, 1, rng), "linear"};
  const auto ckpt = dir / "enc.json";
  save_encoder_checkpoint(ckpt, 80, {l1, l2});

  EncoderConfig cfg;
  cfg.backend = EncoderBackend::kPretrainedSsl;
  cfg.checkpoint = ckpt;
  cfg.feature_dim = 0;
  const auto clip = normalize(testing::tone(4.0, 500.0));
  const Matrix mel = log_mel(clip, 80, 0.025, 0.020);

  // Last layer (default).
  const auto last = Encoder::load(cfg)->encode(clip);
  const Matrix h1 = ((mel * l1.weight.transpose()).rowwise() + l1.bias.transpose()).array().tanh().matrix();
  const Matrix h2 = (h1 * l2.weight.transpose()).rowwise() + l2.bias.transpose();
  CHECK(last.dim() == 3);
  CHECK((last.frames - h2).cwiseAbs().maxCoeff() < 1e-9);

  // First layer.
  cfg.layer = 0;
  const auto first = Encoder::load(cfg)->encode(clip);
  CHECK(first.dim() == 6);
  CHECK((first.frames - h1).cwiseAbs().maxCoeff() < 1e-9);

  // The hash follows the checkpoint contents.
  const auto h_before = cfg.hash();
  save_encoder_checkpoint(ckpt, 80, {l1});
  CHECK(cfg.hash() != h_before);
}

TEST_CASE("pretrained backend reports a missing checkpoint") {
  EncoderConfig cfg;
  cfg.backend = EncoderBackend::kPretrainedSsl;
  cfg.checkpoint = "/nonexistent/encoder.json";
  CHECK_THROWS_AS(Encoder::load(cfg), ModelError);
}

TEST_CASE("feature cache round trips and is keyed by clip and config") {
  TempDir dir("cache");
  const FeatureCache cache(dir.path());
  const auto enc = Encoder::load(EncoderConfig{});
  const auto clip = normalize(testing::tone(4.0, 250.0));
  const auto key = cache.key(clip, enc->config());
  CHECK(!cache.get(key));
  const auto fresh = cache.encode(*enc, clip);
  const auto hit = cache.get(key);
  REQUIRE(hit);
  CHECK(bit_identical(hit->frames, fresh.frames));
  CHECK(hit->frame_stride_s == fresh.frame_stride_s);

  auto other = clip;
  other.samples[0] += 0.01f;
  CHECK(cache.key(other, enc->config()) != key);
  EncoderConfig cfg2;
  cfg2.feature_dim = 40;
  CHECK(cache.key(clip, cfg2) != key);
}
