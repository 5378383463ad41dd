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

#include "speechcoach/audio.hpp"

#include "speechcoach/types.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>

namespace speechcoach {

float AudioClip::peak() const {
  float p = 0.0f;
  for (float s : samples) p = std::max(p, std::abs(s));
  return p;
}

std::vector<float> resample(std::span<const float> samples, double source_rate,
                            double target_rate) {
  if (source_rate < kMinSampleRate || source_rate > kMaxSampleRate * 2.0 ||
      target_rate < kMinSampleRate || target_rate > kMaxSampleRate * 2.0) {
    throw InputError(fmt::format("cannot resample {} Hz -> {} Hz", source_rate, target_rate));
  }
  if (source_rate == target_rate) return {samples.begin(), samples.end()};

  const double ratio = source_rate / target_rate;  // input samples per output sample
  const double cutoff = std::min(1.0, 1.0 / ratio);
  constexpr int kZeroCrossings = 16;
  const double half_width = kZeroCrossings / cutoff;
  const auto n_in = static_cast<std::ptrdiff_t>(samples.size());
  const auto n_out = static_cast<std::size_t>(
      std::llround(static_cast<double>(samples.size()) / ratio));

  std::vector<float> out(n_out, 0.0f);
  for (std::size_t n = 0; n < n_out; ++n) {
    const double t = static_cast<double>(n) * ratio;
    const auto lo = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(std::ceil(t - half_width)));
    const auto hi = std::min<std::ptrdiff_t>(n_in - 1, static_cast<std::ptrdiff_t>(std::floor(t + half_width)));
    double acc = 0.0;
    for (std::ptrdiff_t j = lo; j <= hi; ++j) {
      const double x = t - static_cast<double>(j);
      const double arg = std::numbers::pi * cutoff * x;
      const double sinc = x == 0.0 ? 1.0 : std::sin(arg) / arg;
      const double window = 0.5 + 0.5 * std::cos(std::numbers::pi * x / half_width);
      acc += samples[static_cast<std::size_t>(j)] * cutoff * sinc * window;
    }
    out[n] = static_cast<float>(acc);
  }
  return out;
}

AudioClip normalize(const AudioClip& clip) {
  if (clip.samples.empty()) throw InputError("cannot normalize an empty clip");
  if (clip.sample_rate < kMinSampleRate || clip.sample_rate > kMaxSampleRate) {
    throw InputError(fmt::format("unsupported sample rate {} Hz", clip.sample_rate));
  }
  if (!std::all_of(clip.samples.begin(), clip.samples.end(), [](float s) { return std::isfinite(s); })) {
    throw InputError("clip contains non-finite samples");
  }
  AudioClip out;
  out.sample_rate = kCanonicalSampleRate;
  out.samples = clip.sample_rate == kCanonicalSampleRate
                    ? clip.samples
                    : resample(clip.samples, clip.sample_rate, kCanonicalSampleRate);
  out.samples.resize(kCanonicalSamples, 0.0f);

  const float peak = out.peak();
  if (peak > 1.0f) {
    const float gain = 1.0f / peak;
    for (float& s : out.samples) s = std::clamp(s * gain, -1.0f, 1.0f);
  }
  return out;
}

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatMuLaw = 7;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  bool has(std::size_t n) const { return pos_ + n <= bytes_.size(); }
  std::size_t pos() const { return pos_; }
  void seek(std::size_t pos) { pos_ = pos; }

  std::uint32_t u32() { return static_cast<std::uint32_t>(read_le(4)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(read_le(2)); }
  std::string tag() {
    need(4);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), 4);
    pos_ += 4;
    return s;
  }

 private:
  void need(std::size_t n) const {
    if (!has(n)) throw InputError("truncated WAV data");
  }
  std::uint64_t read_le(std::size_t n) {
    need(n);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += n;
    return v;
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

float mulaw_to_linear(std::uint8_t code) {
  code = static_cast<std::uint8_t>(~code);
  const int sign = code & 0x80;
  const int exponent = (code >> 4) & 0x07;
  const int mantissa = code & 0x0F;
  int magnitude = ((mantissa << 3) + 0x84) << exponent;
  magnitude -= 0x84;
  const int value = sign ? -magnitude : magnitude;
  return static_cast<float>(value) / 32768.0f;
}

float decode_sample(const std::uint8_t* p, std::uint16_t format, std::uint16_t bits) {
  if (format == kFormatMuLaw) return mulaw_to_linear(*p);
  if (format == kFormatFloat) {
    if (bits == 32) {
      std::uint32_t raw = p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
      return std::bit_cast<float>(raw);
    }
    std::uint64_t raw = 0;
    for (int i = 0; i < 8; ++i) raw |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return static_cast<float>(std::bit_cast<double>(raw));
  }
  switch (bits) {
    case 8:
      return (static_cast<float>(p[0]) - 128.0f) / 128.0f;
    case 16:
      return static_cast<float>(static_cast<std::int16_t>(p[0] | (p[1] << 8))) / 32768.0f;
    case 24: {
      std::int32_t v = p[0] | (p[1] << 8) | (p[2] << 16);
      if (v & 0x800000) v |= ~0xFFFFFF;
      return static_cast<float>(v) / 8388608.0f;
    }
    default: {
      auto v = static_cast<std::int32_t>(p[0] | (p[1] << 8) | (p[2] << 16) |
                                         (static_cast<std::uint32_t>(p[3]) << 24));
      return static_cast<float>(static_cast<double>(v) / 2147483648.0);
    }
  }
}

}  // namespace

AudioClip decode_wav(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes);
  if (!in.has(12) || in.tag() != "RIFF") throw InputError("not a RIFF file");
  in.u32();
  if (in.tag() != "WAVE") throw InputError("not a WAVE file");

  std::uint16_t format = 0, channels = 0, bits = 0, block_align = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  while (in.has(8)) {
    const std::string id = in.tag();
    const std::uint32_t size = in.u32();
    const std::size_t body = in.pos();
    if (id == "fmt ") {
      format = in.u16();
      channels = in.u16();
      rate = in.u32();
      in.u32();
      block_align = in.u16();
      bits = in.u16();
      if (format == kFormatExtensible && size >= 40) {
        in.u16();  // cbSize
        in.u16();  // valid bits
        in.u32();  // channel mask
        format = in.u16();
      }
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw InputError("WAV data chunk precedes fmt chunk");
      const bool supported =
          (format == kFormatPcm && (bits == 8 || bits == 16 || bits == 24 || bits == 32)) ||
          (format == kFormatFloat && (bits == 32 || bits == 64)) ||
          (format == kFormatMuLaw && bits == 8);
      if (!supported) {
        throw InputError(fmt::format("unsupported WAV encoding (format {}, {} bits)", format, bits));
      }
      if (channels == 0 || block_align != channels * (bits / 8)) {
        throw InputError("inconsistent WAV block alignment");
      }
      const std::size_t available = std::min<std::size_t>(size, bytes.size() - body);
      const std::size_t frames = available / block_align;
      const std::size_t width = bits / 8;
      AudioClip clip;
      clip.sample_rate = static_cast<int>(rate);
      clip.samples.resize(frames);
      const std::uint8_t* base = bytes.data() + body;
      for (std::size_t f = 0; f < frames; ++f) {
        double acc = 0.0;
        for (std::size_t c = 0; c < channels; ++c) {
          acc += decode_sample(base + f * block_align + c * width, format, bits);
        }
        clip.samples[f] = static_cast<float>(acc / channels);
      }
      return clip;
    }
    in.seek(body + size + (size & 1u));
  }
  throw InputError("WAV file has no data chunk");
}

AudioClip read_wav(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw InputError(fmt::format("cannot open audio file {}", path.string()));
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());
  return decode_wav(bytes);
}

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}
void put_tag(std::vector<std::uint8_t>& out, const char* tag) { out.insert(out.end(), tag, tag + 4); }

std::vector<std::uint8_t> wav_header(std::uint16_t format, std::uint16_t bits, int rate,
                                     std::size_t n_samples) {
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(n_samples * (bits / 8));
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  put_tag(out, "RIFF");
  put_u32(out, 36 + data_bytes);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, format);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(rate));
  put_u32(out, static_cast<std::uint32_t>(rate) * (bits / 8));
  put_u16(out, bits / 8);
  put_u16(out, bits);
  put_tag(out, "data");
  put_u32(out, data_bytes);
  return out;
}

}  // namespace

std::vector<std::uint8_t> encode_wav_pcm16(const AudioClip& clip) {
  auto out = wav_header(kFormatPcm, 16, clip.sample_rate, clip.samples.size());
  for (float s : clip.samples) {
    const auto v = static_cast<std::int16_t>(std::lround(std::clamp(s, -1.0f, 1.0f) * 32767.0f));
    put_u16(out, static_cast<std::uint16_t>(v));
  }
  return out;
}

std::vector<std::uint8_t> encode_wav_float(const AudioClip& clip) {
  auto out = wav_header(kFormatFloat, 32, clip.sample_rate, clip.samples.size());
  for (float s : clip.samples) put_u32(out, std::bit_cast<std::uint32_t>(s));
  return out;
}

void write_wav(const std::filesystem::path& path, const AudioClip& clip) {
  const auto bytes = encode_wav_float(clip);
  std::ofstream file(path, std::ios::binary);
  if (!file) throw InputError(fmt::format("cannot write {}", path.string()));
  file.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<float> envelope(const AudioClip& clip, std::size_t points) {
  const std::size_t n = clip.samples.size();
  if (n == 0 || points == 0) return {};
  const std::size_t buckets = std::min(points, n);
  std::vector<float> out(buckets, 0.0f);
  for (std::size_t b = 0; b < buckets; ++b) {
    const std::size_t lo = b * n / buckets;
    const std::size_t hi = (b + 1) * n / buckets;
    for (std::size_t i = lo; i < hi; ++i) out[b] = std::max(out[b], std::abs(clip.samples[i]));
  }
  return out;
}

}  // namespace speechcoach
