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

#ifndef SPEECHCOACH_MODEL_HPP_
#define SPEECHCOACH_MODEL_HPP_

#include "speechcoach/calibration.hpp"
#include "speechcoach/encoder.hpp"
#include "speechcoach/metric.hpp"
#include "speechcoach/scorer.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>

namespace speechcoach {

struct ScorerBundle {
  ClassifierParams params;
  nlohmann::json train_config;
  TrainingLog log;
};

struct MetricBundle {
  EmbeddingNet net;
  nlohmann::json train_config;
  MetricTrainingLog log;
  EmbeddingPoint anchor;
  double margin = 1.0;
};

/*
 Model container: one CBOR (RFC 8949) document holding a JSON-model object

   {"format": "speechcoach-model", "version": 1,
    "encoder": {"config": {...}, "hash": "<sha256>"},
    "scorer": {"params": {...}, "train_config": {...}, "log": {...}},
    "calibration": {"temperature": T, "nll_before": ..., ...},
    "metric": {"net": {...}, "train_config": {...}, "log": {...},
               "anchor": [x, y], "margin": m}}

 "scorer", "calibration" and "metric" are optional so the container can be
 filled in stages (train-scorer, calibrate, train-metric). Object keys are
 serialized in sorted order, so equal content gives identical bytes.
*/
struct ModelContainer {
  EncoderConfig encoder;
  std::string encoder_hash;
  std::optional<ScorerBundle> scorer;
  std::optional<CalibrationModel> calibration;
  std::optional<MetricBundle> metric;

  // Scorer, calibration and metric all present.
  bool complete() const { return scorer && calibration && metric; }
  // Throws ModelError naming the first missing component.
  void require_complete() const;

  nlohmann::json to_json() const;
  static ModelContainer from_json(const nlohmann::json& j);

  void save(const std::filesystem::path& path) const;
  // Throws ModelError when the file is missing or corrupt.
  static ModelContainer load(const std::filesystem::path& path);
};

}  // namespace speechcoach

#endif  // SPEECHCOACH_MODEL_HPP_
