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

#ifndef SPEECHCOACH_ANALYSIS_HPP_
#define SPEECHCOACH_ANALYSIS_HPP_

#include "speechcoach/calibration.hpp"
#include "speechcoach/differ.hpp"
#include "speechcoach/metric.hpp"
#include "speechcoach/model.hpp"

#include <json.hpp>

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace speechcoach {

inline constexpr int kSchemaVersion = 1;
// Clips whose peak amplitude is below this are rejected as silent.
inline constexpr float kSilencePeakFloor = 1e-3f;

class SilentInputError : public InputError {
 public:
  explicit SilentInputError(const std::string& what) : InputError(what) {}
};

/*
 AnalysisResult payload (schema_version 1):

   {"schema_version": 1, "result_id": str, "sentence_id": str,
    "timestamp_ms": int,                    // 0 for offline analysis
    "score": {"p_native": float, "display": int},
    "predicted_label": "native" | "non-native",
    "segments": [{"start_s": f, "end_s": f, "intensity": f}, ...],
    "point": {"x": f, "y": f},              // native anchor at the origin
    "anchor": {"x": 0, "y": 0},
    "distance": float,
    "duration_s": 4.0,
    "waveform_preview": [float, ...]}       // <= 1000 max-abs buckets
*/
struct AnalysisResult {
  std::string result_id;
  std::string sentence_id;
  std::int64_t timestamp_ms = 0;
  PronunciationScore score;
  Label predicted_label = Label::kNative;
  std::vector<DifferenceSegment> segments;
  EmbeddingPoint point;
  double distance = 0.0;
  double duration_s = kCanonicalDurationS;
  std::vector<float> waveform_preview;

  nlohmann::json to_json() const;
  // Throws InputError when a required field is missing or out of range.
  static AnalysisResult from_json(const nlohmann::json& j);
};

struct AnalysisConfig {
  DiffConfig diff;
  float silence_peak_floor = kSilencePeakFloor;
  std::size_t preview_points = 1000;
};

// normalize -> encode -> chunk -> score -> extract_segments -> distance.
// Holds only immutable state; analyze() may run concurrently.
class Analyzer {
 public:
  Analyzer(std::shared_ptr<const ModelContainer> model, AnalysisConfig cfg = {});

  // result_id, sentence_id and timestamp are left for the caller.
  // Throws SilentInputError for near-silent input.
  AnalysisResult analyze(const AudioClip& raw) const;

  const ModelContainer& model() const { return *model_; }

 private:
  std::shared_ptr<const ModelContainer> model_;
  std::shared_ptr<const Encoder> encoder_;
  AnalysisConfig cfg_;
};

}  // namespace speechcoach

#endif  // SPEECHCOACH_ANALYSIS_HPP_
