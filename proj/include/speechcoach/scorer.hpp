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

#ifndef SPEECHCOACH_SCORER_HPP_
#define SPEECHCOACH_SCORER_HPP_

#include "speechcoach/encoder.hpp"
#include "speechcoach/nn.hpp"
#include "speechcoach/types.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace speechcoach {

struct ClassifierShape {
  Eigen::Index input_dim = 400;
  Eigen::Index recurrent_hidden_dim = 128;
  Eigen::Index attention_hidden_dim = 32;
  bool bidirectional = true;
  double dropout_p = 0.5;
};

// Recurrent encoder over chunk rows, additive attention pooling and a
// two-way softmax head. hidden-state dim is recurrent_hidden_dim, doubled
// when bidirectional.
struct ClassifierParams {
  ClassifierShape shape;
  nn::InputScaler scaler;
  nn::Recurrent recurrent;
  Matrix W_A1;  // attention_hidden x hidden-state
  Matrix W_A2;  // 1 x attention_hidden
  Matrix W_S;   // 2 x hidden-state
  Matrix b_S;   // 2 x 1

  Eigen::Index hidden_state_dim() const { return recurrent.output_dim(); }

  static ClassifierParams init(const ClassifierShape& shape, std::uint64_t seed);
  ClassifierParams zeros_like() const;
  // Trainable blocks in a fixed order: recurrent..., W_A1, W_A2, W_S, b_S.
  std::vector<Matrix*> blocks();
  void validate() const;

  nlohmann::json to_json() const;
  static ClassifierParams from_json(const nlohmann::json& j);
};

struct AttentionVector {
  Vector weights;  // length T', nonnegative, sums to 1
};

// alpha = softmax(W_A2 tanh(W_A1 H^T)) with H given as T' x hidden-state.
AttentionVector attention_weights(const Matrix& hidden_states, const ClassifierParams& params);

struct ClassifierOutput {
  std::array<double, 2> logits{};
  std::array<double, 2> probabilities{};
  Label predicted_label = Label::kNative;
  AttentionVector attention;
  Matrix hidden_states;  // T' x hidden-state
  Vector pooled;         // H^T alpha
};

std::array<double, 2> softmax2(const std::array<double, 2>& logits);
// Index 0 (native) wins ties.
Label argmax_label(const std::array<double, 2>& probabilities);

// Inference: dropout disabled.
ClassifierOutput classify(const ChunkedSequence& chunks, const ClassifierParams& params);
ClassifierOutput classify(const Matrix& chunk_rows, const ClassifierParams& params);

inline constexpr double kFocalEpsilon = 1e-12;
// -(1 - p)^gamma * log(p) with p = probabilities[label] clamped to >= 1e-12.
double focal_loss(const std::array<double, 2>& probabilities, Label label, double gamma);
// d focal_loss / d logits.
std::array<double, 2> focal_loss_logit_grad(const std::array<double, 2>& probabilities, Label label, double gamma);

struct LabeledSequence {
  Matrix chunks;  // T' x input_dim
  Label label = Label::kNative;
};

// Mean focal loss over `batch`. When `grad` is non-null, the gradient of that
// mean w.r.t. every trainable block is accumulated into it. A non-null
// `dropout_rng` switches on training-mode dropout on the pooled vector.
double batch_loss(const ClassifierParams& params, std::span<const LabeledSequence* const> batch, double gamma,
                  ClassifierParams* grad, std::mt19937_64* dropout_rng);

struct TrainConfig {
  int batch_size = 32;
  double learning_rate = 1e-4;
  double focal_gamma = 2.0;
  int max_epochs = 30;
  int early_stop_patience = 10;
  std::uint64_t rng_seed = 0;

  nlohmann::json to_json() const;
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

struct TrainingLog {
  std::vector<EpochStats> epochs;
  int best_epoch = 0;
  bool early_stopped = false;

  nlohmann::json to_json() const;
  static TrainingLog from_json(const nlohmann::json& j);
};

struct TrainedClassifier {
  ClassifierParams params;
  TrainingLog log;
};

// Adam on mean focal loss; early stopping on validation loss; the returned
// parameters are the best-validation epoch's. Throws InputError on an empty
// or single-class split.
TrainedClassifier train_classifier(const std::vector<LabeledSequence>& train, const std::vector<LabeledSequence>& val,
                                   ClassifierShape shape, const TrainConfig& cfg);

struct Evaluation {
  double accuracy = 0.0;
  double mean_focal_loss = 0.0;
  std::size_t count = 0;
};
Evaluation evaluate_classifier(const ClassifierParams& params, const std::vector<LabeledSequence>& data,
                               double gamma);

// Throws InputError unless both labels are present.
void require_both_classes(std::span<const Label> labels, const char* what);

}  // namespace speechcoach

#endif  // SPEECHCOACH_SCORER_HPP_
