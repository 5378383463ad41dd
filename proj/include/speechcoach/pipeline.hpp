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

#ifndef SPEECHCOACH_PIPELINE_HPP_
#define SPEECHCOACH_PIPELINE_HPP_

#include "speechcoach/augment.hpp"
#include "speechcoach/encoder.hpp"
#include "speechcoach/manifest.hpp"
#include "speechcoach/metric.hpp"
#include "speechcoach/scorer.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace speechcoach {

// read_wav + normalize.
AudioClip load_clip(const UtteranceRecord& record, const std::filesystem::path& base_dir);
std::vector<AudioClip> load_clips(const std::vector<UtteranceRecord>& records, const std::filesystem::path& base_dir);

ChunkedSequence featurize(const AudioClip& canonical, const Encoder& encoder, const FeatureCache* cache = nullptr);

// Each clip contributes its clean features plus `copies` augmented variants
// drawn with AugmentationConfig::defaults and per-copy seeds derived from `seed`.
struct AugmentPlan {
  std::size_t copies = 0;
  std::uint64_t seed = 0;
};

std::vector<LabeledSequence> featurize_all(std::span<const AudioClip> clips, std::span<const Label> labels,
                                           const Encoder& encoder, const AugmentPlan& plan = {},
                                           const FeatureCache* cache = nullptr);

std::vector<Label> labels_of(const std::vector<UtteranceRecord>& records);

// Largest embedding displacement between each clip and a copy with additive
// Gaussian noise at `snr_db`, over `draws` noise seeds per clip.
double measure_perturbation_radius(std::span<const AudioClip> clips, const Encoder& encoder, const EmbeddingNet& net,
                                   double snr_db = 30.0, int draws = 2, std::uint64_t seed = 0);

AudioClip with_noise(const AudioClip& canonical, double snr_db, std::uint64_t seed);

}  // namespace speechcoach

#endif  // SPEECHCOACH_PIPELINE_HPP_
