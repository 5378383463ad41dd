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

#ifndef SPEECHCOACH_AUDIO_HPP_
#define SPEECHCOACH_AUDIO_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace speechcoach {

inline constexpr int kCanonicalSampleRate = 16000;
inline constexpr double kCanonicalDurationS = 4.0;
inline constexpr std::size_t kCanonicalSamples = 64000;

struct AudioClip {
  std::vector<float> samples;
  int sample_rate = kCanonicalSampleRate;

  double duration_s() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
  bool is_canonical() const {
    return sample_rate == kCanonicalSampleRate && samples.size() == kCanonicalSamples;
  }
  float peak() const;
};

// Mono, 16 kHz, exactly 4 s (end zero-padding / end truncation), peak <= 1.
// Clips whose peak already lies within [-1, 1] are not rescaled, which keeps
// the operation idempotent.
AudioClip normalize(const AudioClip& clip);

// Band-limited (windowed sinc) resampling to `target_rate`.
// Rates outside [kMinSampleRate, kMaxSampleRate] are rejected.
inline constexpr int kMinSampleRate = 4000;
inline constexpr int kMaxSampleRate = 192000;
std::vector<float> resample(std::span<const float> samples, double source_rate,
                            double target_rate);

// WAV decoding. Accepts RIFF/WAVE with PCM 8/16/24/32-bit, IEEE float 32/64
// and G.711 mu-law; any channel count (downmixed by averaging channels).
AudioClip decode_wav(std::span<const std::uint8_t> bytes);
AudioClip read_wav(const std::filesystem::path& path);

// 16-bit PCM mono.
std::vector<std::uint8_t> encode_wav_pcm16(const AudioClip& clip);
// 32-bit float mono.
std::vector<std::uint8_t> encode_wav_float(const AudioClip& clip);
void write_wav(const std::filesystem::path& path, const AudioClip& clip);

// Max-abs envelope with at most `points` buckets.
std::vector<float> envelope(const AudioClip& clip, std::size_t points = 1000);

}  // namespace speechcoach

#endif  // SPEECHCOACH_AUDIO_HPP_
