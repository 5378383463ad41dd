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

#ifndef SPEECHCOACH_DIFFER_HPP_
#define SPEECHCOACH_DIFFER_HPP_

#include "speechcoach/scorer.hpp"

#include <json.hpp>

#include <optional>
#include <vector>

namespace speechcoach {

struct DifferenceSegment {
  double start_s = 0.0;
  double end_s = 0.0;
  double intensity = 0.0;  // [0, 1], darker = larger
};

struct DiffConfig {
  double z_threshold = 1.0;
  int merge_gap_chunks = 1;
  double min_std = 1e-8;
  // Utterances predicted native with calibrated P(native) >= this get no segments.
  double proficiency_threshold = 0.8;

  void validate() const;
};

// z_i = (alpha_i - mean) / max(std, min_std), population standard deviation.
Vector standardize(const AttentionVector& alpha, double min_std = 1e-8);

// Chunks with z > z_threshold become [i*stride, (i+1)*stride). Flagged chunks
// separated by at most merge_gap_chunks unflagged chunks are merged (the gap
// is absorbed); a merged segment takes the max member intensity. Intensity is
// clamp((z - z_threshold) / (z_max - z_threshold), 0, 1).
// `p_native` is the calibrated score; when given, a native prediction at or
// above cfg.proficiency_threshold suppresses all segments.
std::vector<DifferenceSegment> extract_segments(const AttentionVector& alpha, double chunk_stride_s,
                                                const DiffConfig& cfg, Label predicted_label,
                                                std::optional<double> p_native = std::nullopt);

nlohmann::json to_json(const DifferenceSegment& seg);

}  // namespace speechcoach

#endif  // SPEECHCOACH_DIFFER_HPP_
