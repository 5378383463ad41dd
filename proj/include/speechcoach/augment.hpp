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

#ifndef SPEECHCOACH_AUGMENT_HPP_
#define SPEECHCOACH_AUGMENT_HPP_

#include "speechcoach/audio.hpp"

#include <cstdint>
#include <optional>

namespace speechcoach {

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

// Training-time perturbations. A transform whose range is unset is skipped.
// Note that an SNR of 0 dB means noise as loud as the signal, so "no noise"
// is expressed by leaving noise_snr_db unset.
struct AugmentationConfig {
  std::optional<Range> noise_snr_db;
  std::optional<Range> gain_db;
  std::optional<Range> pitch_shift_semitones;
  double silence_fraction_max = 0.0;
  std::uint64_t rng_seed = 0;

  // SNR [5, 30] dB, gain [-6, +6] dB, pitch [-2, +2] semitones, silence <= 0.1.
  static AugmentationConfig defaults(std::uint64_t seed);

  // Throws InputError when lo > hi or silence_fraction_max is outside [0, 1).
  void validate() const;
};

// Applies pitch shift, gain, additive Gaussian noise and one random silenced
// span, in that order, each with its own parameter drawn from the config.
// The result is canonical and a pure function of (clip, cfg).
AudioClip augment(const AudioClip& clip, const AugmentationConfig& cfg);

// Pitch shift by resampling; the output keeps the input length.
std::vector<float> pitch_shift(std::span<const float> samples, double semitones);

double rms(std::span<const float> samples);

}  // namespace speechcoach

#endif  // SPEECHCOACH_AUGMENT_HPP_
