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

#include "speechcoach/analysis.hpp"

#include "speechcoach/pipeline.hpp"

#include <fmt/format.h>

#include <cmath>

namespace speechcoach {

using nlohmann::json;

json AnalysisResult::to_json() const {
  json segs = json::array();
  for (const auto& s : segments) segs.push_back(speechcoach::to_json(s));
  return {{"schema_version", kSchemaVersion},
          {"result_id", result_id},
          {"sentence_id", sentence_id},
          {"timestamp_ms", timestamp_ms},
          {"score", {{"p_native", score.p_native}, {"display", score.display}}},
          {"predicted_label", to_string(predicted_label)},
          {"segments", std::move(segs)},
          {"point", {{"x", point.x}, {"y", point.y}}},
          {"anchor", {{"x", 0.0}, {"y", 0.0}}},
          {"distance", distance},
          {"duration_s", duration_s},
          {"waveform_preview", waveform_preview}};
}

AnalysisResult AnalysisResult::from_json(const json& j) {
  AnalysisResult r;
  try {
    if (j.at("schema_version").get<int>() != kSchemaVersion) throw InputError("unsupported schema_version");
    r.result_id = j.at("result_id").get<std::string>();
    r.sentence_id = j.at("sentence_id").get<std::string>();
    r.timestamp_ms = j.at("timestamp_ms").get<std::int64_t>();
    r.score.p_native = j.at("score").at("p_native").get<double>();
    r.score.display = j.at("score").at("display").get<int>();
    r.predicted_label = parse_label(j.at("predicted_label").get<std::string>());
    for (const auto& s : j.at("segments")) {
      r.segments.push_back({s.at("start_s").get<double>(), s.at("end_s").get<double>(), s.at("intensity").get<double>()});
    }
    r.point = {j.at("point").at("x").get<double>(), j.at("point").at("y").get<double>()};
    r.distance = j.at("distance").get<double>();
    r.duration_s = j.at("duration_s").get<double>();
    r.waveform_preview = j.at("waveform_preview").get<std::vector<float>>();
  } catch (const json::exception& e) {
    throw InputError(fmt::format("malformed AnalysisResult: {}", e.what()));
  }
  if (r.score.display < 0 || r.score.display > 100 || !(r.score.p_native >= 0.0 && r.score.p_native <= 1.0)) {
    throw InputError("AnalysisResult score out of range");
  }
  double prev_end = 0.0;
  for (const auto& s : r.segments) {
    if (!(s.start_s >= prev_end && s.start_s < s.end_s && s.end_s <= r.duration_s + 1e-9) || s.intensity < 0.0 ||
        s.intensity > 1.0) {
      throw InputError("AnalysisResult segments are out of order or out of range");
    }
    prev_end = s.end_s;
  }
  if (std::abs(std::hypot(r.point.x, r.point.y) - r.distance) > 1e-6) {
    throw InputError("AnalysisResult distance disagrees with point");
  }
  return r;
}

Analyzer::Analyzer(std::shared_ptr<const ModelContainer> model, AnalysisConfig cfg)
    : model_(std::move(model)), cfg_(cfg) {
  if (!model_) throw ModelError("model not loaded");
  model_->require_complete();
  cfg_.diff.validate();
  encoder_ = Encoder::load(model_->encoder);
  if (encoder_->config().hash() != model_->encoder_hash) {
    throw ModelError("encoder configuration differs from the one the model was trained with");
  }
}

AnalysisResult Analyzer::analyze(const AudioClip& raw) const {
  if (raw.samples.empty()) throw SilentInputError("audio contains no samples");
  const AudioClip clip = normalize(raw);
  if (clip.peak() < cfg_.silence_peak_floor) {
    throw SilentInputError(fmt::format("peak amplitude below {}", cfg_.silence_peak_floor));
  }
  const ChunkedSequence chunks = featurize(clip, *encoder_);
  const ScoredUtterance scored = score(chunks, model_->scorer->params, *model_->calibration);
  const auto reading = distance_reading(embed(chunks, model_->metric->net), model_->metric->anchor);

  AnalysisResult r;
  r.score = scored.score;
  r.predicted_label = scored.output.predicted_label;
  r.segments = extract_segments(scored.output.attention, chunks.chunk_stride_s, cfg_.diff,
                                scored.output.predicted_label, scored.score.p_native);
  r.point = reading.user_point;
  r.distance = reading.distance;
  r.duration_s = clip.duration_s();
  r.waveform_preview = envelope(clip, cfg_.preview_points);
  return r;
}

}  // namespace speechcoach
