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

#include "speechcoach/differ.hpp"

#include <algorithm>
#include <cmath>

namespace speechcoach {

void DiffConfig::validate() const {
  if (!(min_std > 0.0)) throw InputError("min_std must be positive");
  if (merge_gap_chunks < 0) throw InputError("merge_gap_chunks must be >= 0");
  if (!std::isfinite(z_threshold)) throw InputError("z_threshold must be finite");
  if (!(proficiency_threshold >= 0.0 && proficiency_threshold <= 1.0)) {
    throw InputError("proficiency_threshold must lie in [0, 1]");
  }
}

Vector standardize(const AttentionVector& alpha, double min_std) {
  const Vector& a = alpha.weights;
  if (a.size() == 0) return {};
  const double mean = a.mean();
  const double var = (a.array() - mean).square().mean();
  const double denom = std::max(std::sqrt(var), min_std);
  return ((a.array() - mean) / denom).matrix();
}

std::vector<DifferenceSegment> extract_segments(const AttentionVector& alpha, double chunk_stride_s,
                                                const DiffConfig& cfg, Label predicted_label,
                                                std::optional<double> p_native) {
  cfg.validate();
  if (!(chunk_stride_s > 0.0)) throw InputError("chunk stride must be positive");
  if (predicted_label == Label::kNative && p_native && *p_native >= cfg.proficiency_threshold) return {};

  const Vector z = standardize(alpha, cfg.min_std);
  std::vector<DifferenceSegment> segments;
  if (z.size() == 0) return segments;
  const double z_max = z.maxCoeff();
  auto intensity = [&](double zi) {
    if (z_max <= cfg.z_threshold) return 1.0;
    return std::clamp((zi - cfg.z_threshold) / (z_max - cfg.z_threshold), 0.0, 1.0);
  };

  Eigen::Index last_flagged = -1;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    if (!(z(i) > cfg.z_threshold)) continue;
    const double start = static_cast<double>(i) * chunk_stride_s;
    const double end = static_cast<double>(i + 1) * chunk_stride_s;
    if (!segments.empty() && i - last_flagged - 1 <= cfg.merge_gap_chunks) {
      segments.back().end_s = end;
      segments.back().intensity = std::max(segments.back().intensity, intensity(z(i)));
    } else {
      segments.push_back({start, end, intensity(z(i))});
    }
    last_flagged = i;
  }
  return segments;
}

nlohmann::json to_json(const DifferenceSegment& seg) {
  return {{"start_s", seg.start_s}, {"end_s", seg.end_s}, {"intensity", seg.intensity}};
}

}  // namespace speechcoach
