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

#include "speechcoach/calibration.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace speechcoach;

namespace {

struct LogitSet {
  std::vector<std::array<double, 2>> logits;
  std::vector<Label> labels;
};

// Labels drawn from the softmax of the logits themselves: calibrated by construction.
LogitSet calibrated_set(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 2.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  LogitSet s;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = z(rng), b = z(rng);
    const double p_native = 1.0 / (1.0 + std::exp(b - a));
    s.logits.push_back({a, b});
    s.labels.push_back(u(rng) < p_native ? Label::kNative : Label::kNonNative);
  }
  return s;
}

// Reference ECE over 15 equal-width confidence bins.
double reference_ece(const std::vector<std::array<double, 2>>& probs, const std::vector<Label>& labels) {
  std::array<double, 15> conf{}, acc{};
  std::array<int, 15> count{};
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const bool native = probs[i][0] >= probs[i][1];
    const double c = native ? probs[i][0] : probs[i][1];
    int b = static_cast<int>(c * 15);
    if (b == 15) b = 14;
    conf[static_cast<std::size_t>(b)] += c;
    acc[static_cast<std::size_t>(b)] += (native == (labels[i] == Label::kNative));
    ++count[static_cast<std::size_t>(b)];
  }
  double e = 0.0;
  for (std::size_t b = 0; b < 15; ++b) {
    if (count[b]) e += std::abs(acc[b] - conf[b]) / static_cast<double>(probs.size());
  }
  return e;
}

}  // namespace

TEST_CASE("calibrated logits fit a temperature near 1") {
  const auto s = calibrated_set(20000, 1);
  const auto c = fit_temperature(s.logits, s.labels);
  CHECK(c.temperature >= 0.9);
  CHECK(c.temperature <= 1.1);
  CHECK(!c.degenerate);
}

TEST_CASE("overconfident logits (x3) recover a temperature near 3 and lower ECE") {
  auto s = calibrated_set(20000, 2);
  for (auto& l : s.logits) {
    l[0] *= 3.0;
    l[1] *= 3.0;
  }
  const auto c = fit_temperature(s.logits, s.labels);
  CHECK(c.temperature >= 2.4);
  CHECK(c.temperature <= 3.6);
  CHECK(c.ece_after < c.ece_before);
  CHECK(c.nll_after <= c.nll_before);
}

TEST_CASE("fitted temperature minimises NLL over a grid") {
  auto s = calibrated_set(3000, 3);
  for (auto& l : s.logits) l[0] *= 0.5;
  const auto c = fit_temperature(s.logits, s.labels);
  for (double t = 0.1; t < 10.0; t *= 1.05) CHECK(mean_nll(s.logits, s.labels, c.temperature) <= mean_nll(s.logits, s.labels, t) + 1e-9);
}

TEST_CASE("ECE matches a reference binning") {
  const auto s = calibrated_set(5000, 4);
  std::vector<std::array<double, 2>> probs;
  for (const auto& l : s.logits) probs.push_back(calibrated_probabilities(l, 1.7));
  CHECK(expected_calibration_error(probs, s.labels) == doctest::Approx(reference_ece(probs, s.labels)).epsilon(1e-12));
}

TEST_CASE("temperature 1 leaves probabilities unchanged") {
  const std::array<double, 2> l{0.3, -1.2};
  const auto p = calibrated_probabilities(l, 1.0);
  const auto q = softmax2(l);
  CHECK(p[0] == q[0]);
  CHECK(p[1] == q[1]);
  CHECK_THROWS_AS(calibrated_probabilities(l, 0.0), InputError);
}

TEST_CASE("identical logits are flagged degenerate and keep T = 1") {
  std::vector<std::array<double, 2>> logits(10, {0.4, 0.1});
  std::vector<Label> labels(10, Label::kNative);
  labels[3] = Label::kNonNative;
  const auto c = fit_temperature(logits, labels);
  CHECK(c.degenerate);
  CHECK(c.temperature == 1.0);
}

TEST_CASE("score closed forms") {
  CalibrationModel c;
  c.temperature = 3.7;
  auto s = score_from_logits({0.0, 0.0}, c);
  CHECK(s.p_native == 0.5);
  CHECK(s.display == 50);
  c.temperature = 2.0;
  s = score_from_logits({2.0, 0.0}, c);
  CHECK(s.p_native == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))).epsilon(1e-12));
  CHECK(s.p_native == doctest::Approx(0.7311).epsilon(1e-4));
  CHECK(s.display == 73);
}

TEST_CASE("scoring the same utterance twice is identical") {
  ClassifierShape shape;
  shape.input_dim = 4;
  shape.recurrent_hidden_dim = 3;
  shape.attention_hidden_dim = 2;
  const auto p = ClassifierParams::init(shape, 5);
  std::mt19937_64 rng(1);
  ChunkedSequence seq{testing::random_matrix(6, 4, rng), 1, 0.1};
  CalibrationModel c;
  c.temperature = 1.3;
  const auto a = score(seq, p, c), b = score(seq, p, c);
  CHECK(a.score.p_native == b.score.p_native);
  CHECK(a.score.display == b.score.display);
}

TEST_CASE("calibration JSON round trip") {
  CalibrationModel c{2.5, 0.7, 0.5, 0.2, 0.05, false};
  const auto d = CalibrationModel::from_json(c.to_json());
  CHECK(d.temperature == 2.5);
  CHECK(d.ece_after == 0.05);
}
