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

#ifndef SPEECHCOACH_METRIC_HPP_
#define SPEECHCOACH_METRIC_HPP_

#include "speechcoach/manifest.hpp"
#include "speechcoach/nn.hpp"
#include "speechcoach/scorer.hpp"

#include <json.hpp>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace speechcoach {

struct EmbeddingShape {
  Eigen::Index input_dim = 400;
  Eigen::Index recurrent_hidden_dim = 128;
  Eigen::Index projection_hidden_dim = 512;
  Eigen::Index output_dim = 2;
  bool bidirectional = true;
  double dropout_p = 0.5;
  // Outputs are L2-normalised and then multiplied by `scale`.
  bool normalize = true;
  double scale = 2.0;
};

// Recurrent encoder, mean-pooled over time, then
// Linear(hidden-state -> 512) + ReLU + dropout + Linear(512 -> 2).
struct EmbeddingNet {
  EmbeddingShape shape;
  nn::InputScaler scaler;
  nn::Recurrent recurrent;
  Matrix W1, b1;  // projection_hidden x hidden-state, projection_hidden x 1
  Matrix W2, b2;  // output x projection_hidden, output x 1
  // Largest embedding displacement caused by 30 dB SNR noise, measured on
  // validation clips after training (0 when not measured).
  double perturbation_radius = 0.0;

  static EmbeddingNet init(const EmbeddingShape& shape, std::uint64_t seed);
  EmbeddingNet zeros_like() const;
  std::vector<Matrix*> blocks();
  void validate() const;

  nlohmann::json to_json() const;
  static EmbeddingNet from_json(const nlohmann::json& j);
};

struct EmbeddingPoint {
  double x = 0.0;
  double y = 0.0;

  bool operator==(const EmbeddingPoint&) const = default;
};

double euclidean(const EmbeddingPoint& a, const EmbeddingPoint& b);

// max(0, d_ap - d_an + m)
double triplet_loss(double d_ap, double d_an, double margin);

struct TripletIndex {
  std::size_t anchor = 0;
  std::size_t positive = 0;
  std::size_t negative = 0;
};

// Uniform triplets: anchor and positive are distinct non-native items, the
// negative is native. Throws InputError with fewer than two non-native or
// zero native items.
std::vector<TripletIndex> sample_triplets(std::span<const Label> labels, std::size_t count, std::uint64_t seed);

struct Triplet {
  UtteranceRecord anchor;
  UtteranceRecord positive;
  UtteranceRecord negative;
};
std::vector<Triplet> sample_triplets(const std::vector<UtteranceRecord>& records, std::size_t count,
                                     std::uint64_t seed);

EmbeddingPoint embed(const Matrix& chunk_rows, const EmbeddingNet& net);
EmbeddingPoint embed(const ChunkedSequence& chunks, const EmbeddingNet& net);
std::vector<EmbeddingPoint> embed_all(std::span<const LabeledSequence> data, const EmbeddingNet& net);

// Mean triplet loss over `triplets` of `data`; accumulates gradients when
// `grad` is non-null and applies dropout when `dropout_rng` is non-null.
double triplet_batch_loss(const EmbeddingNet& net, std::span<const LabeledSequence> data,
                          std::span<const TripletIndex> triplets, double margin, EmbeddingNet* grad,
                          std::mt19937_64* dropout_rng);

struct MetricTrainConfig {
  int batch_size = 32;
  double learning_rate = 1e-4;
  double margin = 1.0;
  int max_epochs = 30;
  int early_stop_patience = 10;
  // Triplets drawn per epoch; 0 means one per training sequence.
  std::size_t triplets_per_epoch = 0;
  std::size_t validation_triplets = 256;
  std::uint64_t rng_seed = 0;

  nlohmann::json to_json() const;
};

struct MetricEpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double train_satisfaction = 0.0;
  double val_loss = 0.0;
  double val_satisfaction = 0.0;
};

struct MetricTrainingLog {
  std::vector<MetricEpochStats> epochs;
  int best_epoch = 0;
  bool early_stopped = false;
  // Set for margin 0, where the hinge is satisfied by any d_an >= d_ap.
  bool degenerate_margin = false;
  std::vector<std::string> warnings;

  nlohmann::json to_json() const;
  static MetricTrainingLog from_json(const nlohmann::json& j);
};

struct TrainedEmbedding {
  EmbeddingNet net;
  MetricTrainingLog log;
};

TrainedEmbedding train_embedding(const std::vector<LabeledSequence>& train, const std::vector<LabeledSequence>& val,
                                 EmbeddingShape shape, const MetricTrainConfig& cfg);

struct TripletEvaluation {
  double mean_loss = 0.0;
  double satisfaction = 0.0;  // fraction with d_ap + m <= d_an
  std::size_t count = 0;
};
TripletEvaluation evaluate_triplets(std::span<const EmbeddingPoint> points, std::span<const TripletIndex> triplets,
                                    double margin);

// Coordinate-wise mean of the given points. Throws InputError when empty.
EmbeddingPoint mean_point(std::span<const EmbeddingPoint> points);
EmbeddingPoint native_anchor(std::span<const LabeledSequence> natives, const EmbeddingNet& net);

struct DistanceReading {
  EmbeddingPoint user_point;    // display coordinates (anchor at origin)
  EmbeddingPoint anchor_point;  // always (0, 0)
  double distance = 0.0;
};

DistanceReading distance_reading(const EmbeddingPoint& user, const EmbeddingPoint& anchor);

}  // namespace speechcoach

#endif  // SPEECHCOACH_METRIC_HPP_
