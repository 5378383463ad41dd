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

#ifndef SPEECHCOACH_SYNTH_HPP_
#define SPEECHCOACH_SYNTH_HPP_

#include "speechcoach/audio.hpp"
#include "speechcoach/manifest.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace speechcoach::synth {

// Parameters of one synthetic talker.
struct Speaker {
  double f0_hz = 140.0;
  double formant_scale = 1.0;
  double gain = 0.5;
};

Speaker random_speaker(std::uint64_t seed);

// A 4 s voiced "utterance": syllables of harmonic source shaped by vowel
// formants over a low noise floor. Non-native clips carry a constant
// spectral offset (lowered second formant plus a 3-6 kHz breath band) and
// one localized deviant syllable; `separation` in [0, 1] scales both.
AudioClip utterance(const Speaker& speaker, Label label, std::uint64_t seed, double separation = 1.0);

struct CorpusSpec {
  std::size_t train_per_class = 100;
  std::size_t val_per_class = 25;
  std::size_t test_per_class = 25;
  std::size_t clips_per_speaker = 5;
  double separation = 1.0;
  std::uint64_t seed = 1;
};

struct Corpus {
  std::vector<UtteranceRecord> records;
  std::vector<AudioClip> clips;  // parallel to records
};

// Speaker-disjoint splits; clip_ref is "clips/<id>.wav".
Corpus generate(const CorpusSpec& spec);

// Writes clips under dir/clips and the manifest to dir/manifest.jsonl.
std::filesystem::path write_corpus(const Corpus& corpus, const std::filesystem::path& dir);

}  // namespace speechcoach::synth

#endif  // SPEECHCOACH_SYNTH_HPP_
