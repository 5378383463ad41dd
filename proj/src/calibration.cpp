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

#include <boost/math/tools/minima.hpp>
#include <fmt/format.h>

#include <cmath>
#include <limits>

namespace speechcoach {

using nlohmann::json;

json CalibrationModel::to_json() const {
  return {{"temperature", temperature}, {"nll_before", nll_before}, {"nll_after", nll_after},
          {"ece_before", ece_before},   {"ece_after", ece_after},   {"degenerate", degenerate}};
}

CalibrationModel CalibrationModel::from_json(const json& j) {
  CalibrationModel c;
  try {
    c.temperature = j.at("temperature").get<double>();
    c.nll_before = j.value("nll_before", 0.0);
    c.nll_after = j.value("nll_after", 0.0);
    c.ece_before = j.value("ece_before", 0.0);
    c.ece_after = j.value("ece_after", 0.0);
    c.degenerate = j.value("degenerate", false);
  } catch (const json::exception& e) {
    throw ModelError(fmt::format("malformed calibration: {}", e.what()));
  }
  if (!(c.temperature > 0.0) || !std::isfinite(c.temperature)) throw ModelError("calibration temperature must be > 0");
  return c;
}

std::array<double, 2> calibrated_probabilities(const std::array<double, 2>& logits, double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw InputError(fmt::format("temperature must be positive and finite, got {}", temperature));
  }
  return softmax2({logits[0] / temperature, logits[1] / temperature});
}

double mean_nll(std::span<const std::array<double, 2>> logits, std::span<const Label> labels, double temperature) {
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double a = logits[i][0] / temperature, b = logits[i][1] / temperature;
    const double mx = std::max(a, b);
    const double lse = mx + std::log(std::exp(a - mx) + std::exp(b - mx));
    total += lse - (labels[i] == Label::kNative ? a : b);
  }
  return logits.empty() ? 0.0 : total / static_cast<double>(logits.size());
}

double expected_calibration_error(std::span<const std::array<double, 2>> probabilities, std::span<const Label> labels,
                                  int bins) {
  std::vector<double> conf_sum(static_cast<std::size_t>(bins), 0.0), acc_sum(static_cast<std::size_t>(bins), 0.0);
  std::vector<std::size_t> count(static_cast<std::size_t>(bins), 0);
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    const Label pred = argmax_label(probabilities[i]);
    const double conf = probabilities[i][static_cast<int>(pred)];
    auto b = static_cast<std::size_t>(std::min(bins - 1, static_cast<int>(conf * bins)));
    conf_sum[b] += conf;
    acc_sum[b] += pred == labels[i] ? 1.0 : 0.0;
    ++count[b];
  }
  double ece = 0.0;
  for (std::size_t b = 0; b < count.size(); ++b) {
    if (count[b] == 0) continue;
    ece += std::abs(acc_sum[b] - conf_sum[b]) / static_cast<double>(probabilities.size());
  }
  return ece;
}

namespace {

double ece_at(std::span<const std::array<double, 2>> logits, std::span<const Label> labels, double temperature) {
  std::vector<std::array<double, 2>> probs;
  probs.reserve(logits.size());
  for (const auto& l : logits) probs.push_back(calibrated_probabilities(l, temperature));
  return expected_calibration_error(probs, labels);
}

}  // namespace

CalibrationModel fit_temperature(std::span<const std::array<double, 2>> logits, std::span<const Label> labels) {
  if (logits.size() != labels.size()) throw InputError("logit/label count mismatch");
  require_both_classes(labels, "calibration");

  CalibrationModel c;
  c.nll_before = mean_nll(logits, labels, 1.0);
  c.ece_before = ece_at(logits, labels, 1.0);

  bool all_same = true;
  for (const auto& l : logits) {
    if (l != logits.front()) {
      all_same = false;
      break;
    }
  }
  if (all_same) {
    c.degenerate = true;
    c.temperature = 1.0;
  } else {
    auto objective = [&](double inv_t) { return mean_nll(logits, labels, 1.0 / inv_t); };
    constexpr int kBits = std::numeric_limits<double>::digits / 2;
    const auto [inv_t, value] =
        boost::math::tools::brent_find_minima(objective, 1.0 / kMaxTemperature, 1.0 / kMinTemperature, kBits);
    (void)value;
    c.temperature = std::clamp(1.0 / inv_t, kMinTemperature, kMaxTemperature);
  }
  c.nll_after = mean_nll(logits, labels, c.temperature);
  c.ece_after = ece_at(logits, labels, c.temperature);
  return c;
}

CalibrationModel fit_calibration(const ClassifierParams& params, const std::vector<LabeledSequence>& val) {
  std::vector<std::array<double, 2>> logits;
  std::vector<Label> labels;
  for (const auto& s : val) {
    logits.push_back(classify(s.chunks, params).logits);
    labels.push_back(s.label);
  }
  return fit_temperature(logits, labels);
}

PronunciationScore score_from_logits(const std::array<double, 2>& logits, const CalibrationModel& calib) {
  PronunciationScore s;
  s.p_native = calibrated_probabilities(logits, calib.temperature)[0];
  s.display = static_cast<int>(std::lround(100.0 * s.p_native));
  return s;
}

ScoredUtterance score(const ChunkedSequence& chunks, const ClassifierParams& params, const CalibrationModel& calib) {
  ScoredUtterance out;
  out.output = classify(chunks, params);
  out.score = score_from_logits(out.output.logits, calib);
  return out;
}

}  // namespace speechcoach
