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

#include "speechcoach/scorer.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <cmath>

using namespace speechcoach;
using testing::random_matrix;

namespace {

ClassifierShape small_shape() {
  ClassifierShape s;
  s.input_dim = 6;
  s.recurrent_hidden_dim = 4;
  s.attention_hidden_dim = 3;
  s.dropout_p = 0.5;
  return s;
}

// Attention evaluated with scalar loops only.
std::vector<double> brute_attention(const Matrix& H, const Matrix& W1, const Matrix& W2) {
  const auto T = H.rows(), d = H.cols(), a = W1.rows();
  std::vector<double> e(static_cast<std::size_t>(T));
  for (Eigen::Index t = 0; t < T; ++t) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < a; ++j) {
      double m = 0.0;
      for (Eigen::Index k = 0; k < d; ++k) m += W1(j, k) * H(t, k);
      s += W2(0, j) * std::tanh(m);
    }
    e[static_cast<std::size_t>(t)] = s;
  }
  double mx = e[0];
  for (double v : e) mx = std::max(mx, v);
  double z = 0.0;
  for (double& v : e) z += (v = std::exp(v - mx));
  for (double& v : e) v /= z;
  return e;
}

}  // namespace

TEST_CASE("attention with W_A2 = 0 is uniform") {
  auto p = ClassifierParams::init(small_shape(), 1);
  p.W_A2.setZero();
  std::mt19937_64 rng(2);
  const auto a = attention_weights(random_matrix(5, 8, rng), p);
  for (Eigen::Index t = 0; t < 5; ++t) CHECK(a.weights(t) == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("attention over one step is [1]") {
  const auto p = ClassifierParams::init(small_shape(), 1);
  std::mt19937_64 rng(2);
  const auto a = attention_weights(random_matrix(1, 8, rng), p);
  REQUIRE(a.weights.size() == 1);
  CHECK(a.weights(0) == 1.0);
}

TEST_CASE("attention on a hand-set 3x2 H") {
  ClassifierParams p;
  p.W_A1.resize(2, 2);
  p.W_A1 << 1.0, -0.5, 0.25, 2.0;
  p.W_A2.resize(1, 2);
  p.W_A2 << 1.5, -1.0;
  Matrix H(3, 2);
  H << 0.1, 0.2, -0.3, 0.4, 0.5, -0.6;
  p.W_S = Matrix::Zero(2, 2);
  p.b_S = Matrix::Zero(2, 1);
  const auto a = attention_weights(H, p);
  // Scalar reference, written out in full.
  const double e0 = 1.5 * std::tanh(0.1 - 0.1) - 1.0 * std::tanh(0.025 + 0.4);
  const double e1 = 1.5 * std::tanh(-0.3 - 0.2) - 1.0 * std::tanh(-0.075 + 0.8);
  const double e2 = 1.5 * std::tanh(0.5 + 0.3) - 1.0 * std::tanh(0.125 - 1.2);
  const double z = std::exp(e0) + std::exp(e1) + std::exp(e2);
  CHECK(a.weights(0) == doctest::Approx(std::exp(e0) / z).epsilon(1e-12));
  CHECK(a.weights(1) == doctest::Approx(std::exp(e1) / z).epsilon(1e-12));
  CHECK(a.weights(2) == doctest::Approx(std::exp(e2) / z).epsilon(1e-12));
}

TEST_CASE("attention matches the brute-force evaluation on random draws") {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> dim(1, 6);
  for (int trial = 0; trial < 200; ++trial) {
    const int T = dim(rng), d = dim(rng), a = dim(rng);
    ClassifierParams p;
    p.W_A1 = random_matrix(a, d, rng);
    p.W_A2 = random_matrix(1, a, rng, 2.0);
    const Matrix H = random_matrix(T, d, rng);
    const auto got = attention_weights(H, p);
    const auto ref = brute_attention(H, p.W_A1, p.W_A2);
    for (int t = 0; t < T; ++t) CHECK(std::abs(got.weights(t) - ref[static_cast<std::size_t>(t)]) < 1e-12);
    CHECK(std::abs(got.weights.sum() - 1.0) < 1e-12);
  }
}

TEST_CASE("attention rejects mismatched dimensions") {
  const auto p = ClassifierParams::init(small_shape(), 1);
  std::mt19937_64 rng(2);
  CHECK_THROWS_AS(attention_weights(random_matrix(3, 5, rng), p), InputError);
  CHECK_THROWS_AS(attention_weights(Matrix(0, 8), p), InputError);
}

TEST_CASE("classifier pooled vector is the attention-weighted sum of hidden states") {
  std::mt19937_64 rng(5);
  const auto p = ClassifierParams::init(small_shape(), 9);
  for (int trial = 0; trial < 20; ++trial) {
    const auto out = classify(random_matrix(4 + trial % 5, 6, rng), p);
    Vector c = Vector::Zero(out.hidden_states.cols());
    for (Eigen::Index t = 0; t < out.hidden_states.rows(); ++t) {
      for (Eigen::Index k = 0; k < c.size(); ++k) c(k) += out.attention.weights(t) * out.hidden_states(t, k);
    }
    CHECK((out.pooled - c).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(out.probabilities[0] + out.probabilities[1] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(out.predicted_label == argmax_label(out.probabilities));
  }
}

TEST_CASE("zero head gives [0.5, 0.5] and the native tie-break") {
  auto p = ClassifierParams::init(small_shape(), 1);
  p.W_S.setZero();
  p.b_S.setZero();
  std::mt19937_64 rng(3);
  const auto out = classify(random_matrix(4, 6, rng), p);
  CHECK(out.probabilities[0] == 0.5);
  CHECK(out.probabilities[1] == 0.5);
  CHECK(out.predicted_label == Label::kNative);
}

TEST_CASE("stubbed head with logits [ln 3, 0] gives [0.75, 0.25]") {
  auto p = ClassifierParams::init(small_shape(), 1);
  p.W_S.setZero();
  p.b_S << std::log(3.0), 0.0;
  std::mt19937_64 rng(3);
  const auto out = classify(random_matrix(4, 6, rng), p);
  CHECK(out.probabilities[0] == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(out.probabilities[1] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(out.predicted_label == Label::kNative);
}

TEST_CASE("focal loss closed forms") {
  CHECK(focal_loss({1.0, 0.0}, Label::kNative, 2.0) == 0.0);
  CHECK(focal_loss({0.0, 1.0}, Label::kNonNative, 0.0) == 0.0);
  CHECK(focal_loss({0.5, 0.5}, Label::kNative, 0.0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(focal_loss({0.9, 0.1}, Label::kNative, 2.0) == doctest::Approx(0.01 * -std::log(0.9)).epsilon(1e-9));
  CHECK(focal_loss({0.9, 0.1}, Label::kNative, 2.0) == doctest::Approx(1.0536e-3).epsilon(1e-4));
  // A zero probability stays finite thanks to the epsilon.
  CHECK(std::isfinite(focal_loss({1.0, 0.0}, Label::kNonNative, 2.0)));
}

TEST_CASE("focal logit gradient matches finite differences") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 2.0);
  for (int trial = 0; trial < 50; ++trial) {
    const std::array<double, 2> z{n(rng), n(rng)};
    const Label y = trial % 2 ? Label::kNative : Label::kNonNative;
    const double gamma = trial % 3;
    const auto g = focal_loss_logit_grad(softmax2(z), y, gamma);
    for (int k = 0; k < 2; ++k) {
      auto zp = z, zm = z;
      zp[static_cast<std::size_t>(k)] += 1e-6;
      zm[static_cast<std::size_t>(k)] -= 1e-6;
      const double fd = (focal_loss(softmax2(zp), y, gamma) - focal_loss(softmax2(zm), y, gamma)) / 2e-6;
      CHECK(g[static_cast<std::size_t>(k)] == doctest::Approx(fd).epsilon(1e-5));
    }
  }
}

TEST_CASE("classifier params JSON round trip and validation") {
  const auto p = ClassifierParams::init(small_shape(), 3);
  const auto q = ClassifierParams::from_json(p.to_json());
  CHECK(q.W_A1 == p.W_A1);
  CHECK(q.recurrent.forward.W == p.recurrent.forward.W);
  CHECK(q.recurrent.backward.U == p.recurrent.backward.U);
  CHECK(q.scaler.mean == p.scaler.mean);
  auto bad = p.to_json();
  bad["W_S"]["rows"] = 3;
  CHECK_THROWS_AS(ClassifierParams::from_json(bad), ModelError);
}

namespace {

std::vector<LabeledSequence> toy_data(std::size_t n, std::uint64_t seed, double offset = 1.0) {
  std::mt19937_64 rng(seed);
  std::vector<LabeledSequence> out;
  for (std::size_t i = 0; i < n; ++i) {
    const Label y = i % 2 ? Label::kNonNative : Label::kNative;
    Matrix x = random_matrix(5, 6, rng);
    x.array() += (y == Label::kNative ? offset : -offset);
    out.push_back({x, y});
  }
  return out;
}

}  // namespace

TEST_CASE("training is deterministic under a fixed seed") {
  const auto train = toy_data(24, 1), val = toy_data(8, 2);
  TrainConfig cfg;
  cfg.max_epochs = 3;
  cfg.batch_size = 8;
  cfg.learning_rate = 1e-2;
  cfg.rng_seed = 17;
  const auto a = train_classifier(train, val, small_shape(), cfg);
  const auto b = train_classifier(train, val, small_shape(), cfg);
  REQUIRE(a.log.epochs.size() == 3);
  for (std::size_t e = 0; e < 3; ++e) {
    CHECK(a.log.epochs[e].train_loss == b.log.epochs[e].train_loss);
    CHECK(a.log.epochs[e].val_loss == b.log.epochs[e].val_loss);
  }
  CHECK(a.params.to_json() == b.params.to_json());
}

TEST_CASE("training learns a separable toy problem") {
  const auto train = toy_data(64, 1), val = toy_data(16, 2), test = toy_data(32, 3);
  TrainConfig cfg;
  cfg.max_epochs = 15;
  cfg.batch_size = 8;
  cfg.learning_rate = 1e-2;
  const auto trained = train_classifier(train, val, small_shape(), cfg);
  CHECK(evaluate_classifier(trained.params, test, 2.0).accuracy >= 0.95);
  CHECK(trained.log.best_epoch >= 1);
}

TEST_CASE("training refuses a single-class validation split") {
  auto train = toy_data(8, 1), val = toy_data(4, 2);
  for (auto& s : val) s.label = Label::kNative;
  CHECK_THROWS_AS(train_classifier(train, val, small_shape(), TrainConfig{}), InputError);
  CHECK_THROWS_AS(train_classifier(train, {}, small_shape(), TrainConfig{}), InputError);
}

TEST_CASE("early stopping restores the best epoch") {
  const auto train = toy_data(16, 1), val = toy_data(8, 2, 0.0);
  TrainConfig cfg;
  cfg.max_epochs = 30;
  cfg.early_stop_patience = 2;
  cfg.batch_size = 4;
  cfg.learning_rate = 5e-2;
  const auto trained = train_classifier(train, val, small_shape(), cfg);
  double best = 1e300;
  int best_epoch = 0;
  for (const auto& e : trained.log.epochs) {
    if (e.val_loss < best) {
      best = e.val_loss;
      best_epoch = e.epoch;
    }
  }
  CHECK(trained.log.best_epoch == best_epoch);
  CHECK(evaluate_classifier(trained.params, val, cfg.focal_gamma).mean_focal_loss == doctest::Approx(best).epsilon(1e-9));
}
