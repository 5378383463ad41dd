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

#include "speechcoach/augment.hpp"

#include "speechcoach/types.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <random>

namespace speechcoach {

AugmentationConfig AugmentationConfig::defaults(std::uint64_t seed) {
  AugmentationConfig cfg;
  cfg.noise_snr_db = Range{5.0, 30.0};
  cfg.gain_db = Range{-6.0, 6.0};
  cfg.pitch_shift_semitones = Range{-2.0, 2.0};
  cfg.silence_fraction_max = 0.1;
  cfg.rng_seed = seed;
  return cfg;
}

void AugmentationConfig::validate() const {
  auto check = [](const std::optional<Range>& r, const char* name) {
    if (r && !(r->lo <= r->hi)) throw InputError(fmt::format("{} range has lo > hi", name));
  };
  check(noise_snr_db, "noise_snr_db");
  check(gain_db, "gain_db");
  check(pitch_shift_semitones, "pitch_shift_semitones");
  if (!(silence_fraction_max >= 0.0 && silence_fraction_max < 1.0)) {
    throw InputError("silence_fraction_max must lie in [0, 1)");
  }
}

double rms(std::span<const float> samples) {
  if (samples.empty()) return 0.0;
  double acc = 0.0;
  for (float s : samples) acc += static_cast<double>(s) * s;
  return std::sqrt(acc / static_cast<double>(samples.size()));
}

std::vector<float> pitch_shift(std::span<const float> samples, double semitones) {
  if (semitones == 0.0) return {samples.begin(), samples.end()};
  // Reading the signal `factor` times faster raises pitch by `semitones`.
  const double factor = std::pow(2.0, semitones / 12.0);
  auto shifted = resample(samples, kCanonicalSampleRate * factor, kCanonicalSampleRate);
  shifted.resize(samples.size(), 0.0f);
  return shifted;
}

AudioClip augment(const AudioClip& clip, const AugmentationConfig& cfg) {
  if (!clip.is_canonical()) throw InputError("augment expects a canonical clip");
  cfg.validate();

  std::mt19937_64 rng(cfg.rng_seed);
  auto draw = [&rng](const Range& r) {
    return r.lo == r.hi ? r.lo : std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
  };

  AudioClip out = clip;
  if (cfg.pitch_shift_semitones) {
    out.samples = pitch_shift(out.samples, draw(*cfg.pitch_shift_semitones));
  }
  if (cfg.gain_db) {
    const double gain = std::pow(10.0, draw(*cfg.gain_db) / 20.0);
    for (float& s : out.samples) s = static_cast<float>(s * gain);
  }
  if (cfg.noise_snr_db) {
    const double snr_db = draw(*cfg.noise_snr_db);
    const double sigma = rms(out.samples) / std::pow(10.0, snr_db / 20.0);
    if (sigma > 0.0) {
      std::normal_distribution<double> noise(0.0, sigma);
      for (float& s : out.samples) s = static_cast<float>(s + noise(rng));
    }
  }
  if (cfg.silence_fraction_max > 0.0) {
    const double fraction = std::uniform_real_distribution<double>(0.0, cfg.silence_fraction_max)(rng);
    const auto n = out.samples.size();
    const auto length = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n)));
    if (length > 0) {
      const auto start = std::uniform_int_distribution<std::size_t>(0, n - length)(rng);
      std::fill_n(out.samples.begin() + static_cast<std::ptrdiff_t>(start), length, 0.0f);
    }
  }
  for (float& s : out.samples) s = std::clamp(s, -1.0f, 1.0f);
  return out;
}

}  // namespace speechcoach
