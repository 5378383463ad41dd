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

#include "speechcoach/synth.hpp"

#include <fmt/format.h>
#include <unsupported/Eigen/FFT>

#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <random>

namespace speechcoach::synth {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr int kRate = kCanonicalSampleRate;

struct Vowel {
  double f1, f2, f3;
};
constexpr std::array<Vowel, 6> kVowels = {{{730, 1090, 2440}, {270, 2290, 3010}, {530, 1840, 2480},
                                           {660, 1720, 2410}, {300, 870, 2240}, {570, 840, 2410}}};

double formant_gain(double f, const Vowel& v) {
  auto bump = [f](double centre, double width, double height) {
    const double d = (f - centre) / width;
    return height * std::exp(-0.5 * d * d);
  };
  return 0.05 + bump(v.f1, 90.0, 1.0) + bump(v.f2, 120.0, 0.6) + bump(v.f3, 160.0, 0.3);
}

std::vector<double> band_noise(std::size_t n, double lo_hz, double hi_hz, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> white(n);
  for (double& w : white) w = g(rng);
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> spec;
  fft.fwd(spec, white);
  for (std::size_t k = 0; k < spec.size(); ++k) {
    const double f = static_cast<double>(std::min(k, spec.size() - k)) * kRate / static_cast<double>(n);
    if (f < lo_hz || f > hi_hz) spec[k] = 0.0;
  }
  std::vector<double> out;
  fft.inv(out, spec);
  double power = 0.0;
  for (double v : out) power += v * v;
  const double norm = power > 0.0 ? std::sqrt(static_cast<double>(n) / power) : 0.0;
  for (double& v : out) v *= norm;
  return out;
}

void add_syllable(std::vector<double>& out, std::size_t start, std::size_t length, double f0, const Vowel& vowel,
                  double amplitude, double phase) {
  const int harmonics = static_cast<int>(4000.0 / f0);
  std::vector<double> weights(static_cast<std::size_t>(harmonics));
  for (int h = 1; h <= harmonics; ++h) weights[static_cast<std::size_t>(h - 1)] = formant_gain(h * f0, vowel) / h;
  for (std::size_t i = 0; i < length && start + i < out.size(); ++i) {
    const double t = static_cast<double>(i) / kRate;
    const double env = std::sin(std::numbers::pi * static_cast<double>(i) / static_cast<double>(length));
    const double f = f0 * (1.0 - 0.08 * static_cast<double>(i) / static_cast<double>(length));
    const double base = kTwoPi * f * t + phase;
    double v = 0.0;
    for (int h = 1; h <= harmonics; ++h) v += weights[static_cast<std::size_t>(h - 1)] * std::sin(h * base);
    out[start + i] += amplitude * env * env * v;
  }
}

}  // namespace

Speaker random_speaker(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Speaker s;
  s.f0_hz = std::uniform_real_distribution<double>(95.0, 220.0)(rng);
  s.formant_scale = std::uniform_real_distribution<double>(0.92, 1.08)(rng);
  s.gain = std::uniform_real_distribution<double>(0.25, 0.6)(rng);
  return s;
}

AudioClip utterance(const Speaker& speaker, Label label, std::uint64_t seed, double separation) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const bool non_native = label == Label::kNonNative;
  std::vector<double> signal(kCanonicalSamples, 0.0);
  std::vector<double> voiced_env(kCanonicalSamples, 0.0);

  // Syllable layout.
  struct Syllable {
    std::size_t start, length;
    Vowel vowel;
  };
  std::vector<Syllable> syllables;
  double t = 0.15 + 0.15 * u(rng);
  while (t < 3.6) {
    const double dur = 0.14 + 0.16 * u(rng);
    if (t + dur > 3.85) break;
    Vowel v = kVowels[static_cast<std::size_t>(u(rng) * kVowels.size()) % kVowels.size()];
    v.f1 *= speaker.formant_scale;
    v.f2 *= speaker.formant_scale;
    v.f3 *= speaker.formant_scale;
    if (non_native) v.f2 *= 1.0 - 0.15 * separation;
    syllables.push_back({static_cast<std::size_t>(t * kRate), static_cast<std::size_t>(dur * kRate), v});
    t += dur + 0.03 + 0.07 * u(rng);
  }
  const std::size_t deviant = syllables.empty() ? 0 : static_cast<std::size_t>(u(rng) * syllables.size()) % syllables.size();
  for (std::size_t i = 0; i < syllables.size(); ++i) {
    const auto& s = syllables[i];
    const double f0 = speaker.f0_hz * (0.9 + 0.2 * u(rng));
    add_syllable(signal, s.start, s.length, f0, s.vowel, 1.0, kTwoPi * u(rng));
    for (std::size_t j = 0; j < s.length && s.start + j < voiced_env.size(); ++j) {
      voiced_env[s.start + j] = std::sin(std::numbers::pi * static_cast<double>(j) / static_cast<double>(s.length));
    }
  }

  double peak = 0.0;
  for (double v : signal) peak = std::max(peak, std::abs(v));
  if (peak > 0.0) {
    for (double& v : signal) v /= peak;
  }

  if (non_native && separation > 0.0) {
    const auto breath = band_noise(kCanonicalSamples, 3000.0, 6000.0, rng);
    for (std::size_t i = 0; i < signal.size(); ++i) signal[i] += 0.12 * separation * voiced_env[i] * breath[i];
    if (!syllables.empty()) {
      // Deviant syllable: replaced by a strong fricative-like burst.
      const auto& s = syllables[deviant];
      const auto hiss = band_noise(kCanonicalSamples, 4500.0, 7500.0, rng);
      for (std::size_t j = 0; j < s.length && s.start + j < signal.size(); ++j) {
        const double env = std::sin(std::numbers::pi * static_cast<double>(j) / static_cast<double>(s.length));
        signal[s.start + j] = (1.0 - separation) * signal[s.start + j] + 0.5 * separation * env * hiss[s.start + j];
      }
    }
  }

  const auto floor_noise = band_noise(kCanonicalSamples, 50.0, 7900.0, rng);
  AudioClip clip;
  clip.sample_rate = kRate;
  clip.samples.resize(kCanonicalSamples);
  for (std::size_t i = 0; i < signal.size(); ++i) {
    const double v = speaker.gain * signal[i] + 0.003 * floor_noise[i];
    clip.samples[i] = static_cast<float>(std::clamp(v, -1.0, 1.0));
  }
  return clip;
}

Corpus generate(const CorpusSpec& spec) {
  Corpus corpus;
  const std::size_t per_speaker = std::max<std::size_t>(1, spec.clips_per_speaker);
  std::uint64_t speaker_counter = 0;
  const std::array<std::pair<Split, std::size_t>, 3> splits = {
      {{Split::kTrain, spec.train_per_class}, {Split::kValidation, spec.val_per_class}, {Split::kTest, spec.test_per_class}}};
  for (const auto& [split, count] : splits) {
    for (Label label : {Label::kNative, Label::kNonNative}) {
      Speaker speaker;
      std::string speaker_id;
      for (std::size_t i = 0; i < count; ++i) {
        if (i % per_speaker == 0) {
          ++speaker_counter;
          speaker = random_speaker(spec.seed * 1000003ULL + speaker_counter);
          speaker_id = fmt::format("{}{:03}", label == Label::kNative ? "nat" : "nnt", speaker_counter);
        }
        const std::string id = fmt::format("{}_{}_{:04}", to_string(split), label == Label::kNative ? "nat" : "nnt", i);
        const std::uint64_t clip_seed = spec.seed * 7919ULL + corpus.records.size() * 104729ULL + 17;
        corpus.clips.push_back(utterance(speaker, label, clip_seed, spec.separation));
        corpus.records.push_back({fmt::format("clips/{}.wav", id), label, speaker_id, std::nullopt, split});
      }
    }
  }
  return corpus;
}

std::filesystem::path write_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "clips");
  for (std::size_t i = 0; i < corpus.records.size(); ++i) {
    write_wav(dir / corpus.records[i].clip_ref, corpus.clips[i]);
  }
  const auto manifest = dir / "manifest.jsonl";
  write_manifest(manifest, corpus.records);
  return manifest;
}

}  // namespace speechcoach::synth
