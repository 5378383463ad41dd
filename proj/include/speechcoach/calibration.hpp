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

#ifndef SPEECHCOACH_CALIBRATION_HPP_
#define SPEECHCOACH_CALIBRATION_HPP_

#include "speechcoach/scorer.hpp"

#include <json.hpp>

#include <array>
#include <span>
#include <vector>

namespace speechcoach {

inline constexpr double kMinTemperature = 0.05;
inline constexpr double kMaxTemperature = 20.0;
inline constexpr int kEceBins = 15;

// Temperature scaling of the classifier's logits.
struct CalibrationModel {
  double temperature = 1.0;
  double nll_before = 0.0;
  double nll_after = 0.0;
  double ece_before = 0.0;
  double ece_after = 0.0;
  // Set when every validation example had identical logits; temperature is then 1.
  bool degenerate = false;

  nlohmann::json to_json() const;
  static CalibrationModel from_json(const nlohmann::json& j);
};

std::array<double, 2> calibrated_probabilities(const std::array<double, 2>& logits, double temperature);

double mean_nll(std::span<const std::array<double, 2>> logits, std::span<const Label> labels, double temperature);

// Equal-width confidence bins over [0, 1]; confidence is the max class probability.
double expected_calibration_error(std::span<const std::array<double, 2>> probabilities, std::span<const Label> labels,
                                  int bins = kEceBins);

// Minimises validation NLL over temperature in [0.05, 20] (Brent search on
// 1/T, where the objective is convex).
CalibrationModel fit_temperature(std::span<const std::array<double, 2>> logits, std::span<const Label> labels);

CalibrationModel fit_calibration(const ClassifierParams& params, const std::vector<LabeledSequence>& val);

struct PronunciationScore {
  double p_native = 0.5;
  int display = 50;  // round(100 * p_native)
};

PronunciationScore score_from_logits(const std::array<double, 2>& logits, const CalibrationModel& calib);

struct ScoredUtterance {
  PronunciationScore score;
  ClassifierOutput output;
};

ScoredUtterance score(const ChunkedSequence& chunks, const ClassifierParams& params, const CalibrationModel& calib);

}  // namespace speechcoach

#endif  // SPEECHCOACH_CALIBRATION_HPP_
