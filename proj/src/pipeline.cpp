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

#include "speechcoach/pipeline.hpp"

#include <algorithm>

namespace speechcoach {

AudioClip load_clip(const UtteranceRecord& record, const std::filesystem::path& base_dir) {
  return normalize(read_wav(resolve_clip(record, base_dir)));
}

std::vector<AudioClip> load_clips(const std::vector<UtteranceRecord>& records, const std::filesystem::path& base_dir) {
  std::vector<AudioClip> clips;
  clips.reserve(records.size());
  for (const auto& r : records) clips.push_back(load_clip(r, base_dir));
  return clips;
}

ChunkedSequence featurize(const AudioClip& canonical, const Encoder& encoder, const FeatureCache* cache) {
  const FeatureSequence seq = cache ? cache->encode(encoder, canonical) : encoder.encode(canonical);
  return chunk(seq, encoder.config().chunk_size_k);
}

std::vector<LabeledSequence> featurize_all(std::span<const AudioClip> clips, std::span<const Label> labels,
                                           const Encoder& encoder, const AugmentPlan& plan,
                                           const FeatureCache* cache) {
  if (clips.size() != labels.size()) throw InputError("clip/label count mismatch");
  std::vector<LabeledSequence> out;
  out.reserve(clips.size() * (1 + plan.copies));
  for (std::size_t i = 0; i < clips.size(); ++i) {
    out.push_back({featurize(clips[i], encoder, cache).chunks, labels[i]});
  }
  for (std::size_t c = 0; c < plan.copies; ++c) {
    for (std::size_t i = 0; i < clips.size(); ++i) {
      const auto cfg = AugmentationConfig::defaults(plan.seed * 6364136223846793005ULL + c * clips.size() + i + 1);
      out.push_back({featurize(augment(clips[i], cfg), encoder, nullptr).chunks, labels[i]});
    }
  }
  return out;
}

std::vector<Label> labels_of(const std::vector<UtteranceRecord>& records) {
  std::vector<Label> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.label);
  return out;
}

AudioClip with_noise(const AudioClip& canonical, double snr_db, std::uint64_t seed) {
  AugmentationConfig cfg;
  cfg.noise_snr_db = Range{snr_db, snr_db};
  cfg.rng_seed = seed;
  return augment(canonical, cfg);
}

double measure_perturbation_radius(std::span<const AudioClip> clips, const Encoder& encoder, const EmbeddingNet& net,
                                   double snr_db, int draws, std::uint64_t seed) {
  double radius = 0.0;
  for (std::size_t i = 0; i < clips.size(); ++i) {
    const EmbeddingPoint clean = embed(featurize(clips[i], encoder), net);
    for (int d = 0; d < draws; ++d) {
      const auto noisy = with_noise(clips[i], snr_db, seed + i * 131 + static_cast<std::uint64_t>(d));
      radius = std::max(radius, euclidean(clean, embed(featurize(noisy, encoder), net)));
    }
  }
  return radius;
}

}  // namespace speechcoach
