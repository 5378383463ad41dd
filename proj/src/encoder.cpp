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

#include "speechcoach/encoder.hpp"

#include "speechcoach/hashing.hpp"
#include "speechcoach/serialize.hpp"

#include <fmt/format.h>
#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <cstdlib>
#include <fstream>
#include <numbers>

namespace speechcoach {

using nlohmann::json;

std::string_view to_string(EncoderBackend backend) {
  return backend == EncoderBackend::kPretrainedSsl ? "pretrained_ssl" : "spectral_fallback";
}

EncoderBackend parse_backend(std::string_view text) {
  if (text == "pretrained_ssl") return EncoderBackend::kPretrainedSsl;
  if (text == "spectral_fallback") return EncoderBackend::kSpectralFallback;
  throw InputError(fmt::format("unknown encoder backend '{}'", text));
}

void EncoderConfig::validate() const {
  if (feature_dim < 0 || (backend == EncoderBackend::kSpectralFallback && feature_dim == 0)) {
    throw InputError("feature_dim must be positive");
  }
  if (chunk_size_k < 1) throw InputError("chunk_size_k must be >= 1");
  if (!(frame_stride_s > 0.0) || !(window_s > 0.0)) throw InputError("frame stride and window must be positive");
  if (backend == EncoderBackend::kPretrainedSsl && checkpoint.empty()) {
    throw ModelError("pretrained_ssl backend requires an encoder checkpoint path");
  }
}

json EncoderConfig::to_json() const {
  json j = {{"backend", to_string(backend)},     {"feature_dim", feature_dim},
            {"frame_stride_s", frame_stride_s},  {"window_s", window_s},
            {"chunk_size_k", chunk_size_k},      {"layer", layer}};
  if (backend == EncoderBackend::kPretrainedSsl) j["checkpoint"] = checkpoint.string();
  return j;
}

EncoderConfig EncoderConfig::from_json(const json& j) {
  EncoderConfig cfg;
  try {
    cfg.backend = parse_backend(j.at("backend").get<std::string>());
    cfg.feature_dim = j.at("feature_dim").get<int>();
    cfg.frame_stride_s = j.at("frame_stride_s").get<double>();
    cfg.window_s = j.value("window_s", 0.025);
    cfg.chunk_size_k = j.at("chunk_size_k").get<int>();
    cfg.layer = j.value("layer", -1);
    if (j.contains("checkpoint")) cfg.checkpoint = j.at("checkpoint").get<std::string>();
  } catch (const json::exception& e) {
    throw ModelError(fmt::format("malformed encoder config: {}", e.what()));
  }
  return cfg;
}

EncoderConfig EncoderConfig::from_env(EncoderConfig base) {
  if (const char* path = std::getenv("SPEECHCOACH_ENCODER_CHECKPOINT"); path && *path) {
    base.backend = EncoderBackend::kPretrainedSsl;
    base.checkpoint = path;
  }
  return base;
}

namespace {

std::string file_hash(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelError(fmt::format("encoder checkpoint not found: {}", path.string()));
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return sha256_hex(bytes);
}

}  // namespace

std::string EncoderConfig::hash() const {
  json j = to_json();
  j.erase("checkpoint");
  if (backend == EncoderBackend::kPretrainedSsl) j["checkpoint_sha256"] = file_hash(checkpoint);
  return sha256_hex(j.dump());
}

ChunkedSequence chunk(const FeatureSequence& seq, int k) {
  if (k < 1) throw InputError("chunk size must be >= 1");
  const Eigen::Index t = seq.num_frames();
  if (k > t) throw InputError(fmt::format("chunk size {} exceeds frame count {}", k, t));
  const Eigen::Index d = seq.dim();
  const Eigen::Index n = t / k;
  ChunkedSequence out;
  out.chunk_size_k = k;
  out.chunk_stride_s = k * seq.frame_stride_s;
  out.chunks.resize(n, k * d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int j = 0; j < k; ++j) out.chunks.block(i, j * d, 1, d) = seq.frames.row(i * k + j);
  }
  return out;
}

Matrix dechunk(const ChunkedSequence& seq) {
  const int k = seq.chunk_size_k;
  const Eigen::Index d = seq.chunks.cols() / k;
  Matrix frames(seq.chunks.rows() * k, d);
  for (Eigen::Index i = 0; i < seq.chunks.rows(); ++i) {
    for (int j = 0; j < k; ++j) frames.row(i * k + j) = seq.chunks.block(i, j * d, 1, d);
  }
  return frames;
}

Eigen::Index frame_count(std::size_t num_samples, int sample_rate, double frame_stride_s) {
  const auto hop = static_cast<std::size_t>(std::lround(frame_stride_s * sample_rate));
  return hop == 0 ? 0 : static_cast<Eigen::Index>(num_samples / hop);
}

namespace {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// n_mels x (n_fft/2 + 1)
Matrix mel_filterbank(int n_mels, int n_fft, int sample_rate) {
  const int bins = n_fft / 2 + 1;
  const double mel_lo = hz_to_mel(0.0);
  const double mel_hi = hz_to_mel(sample_rate / 2.0);
  std::vector<double> edges(static_cast<std::size_t>(n_mels) + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) / (n_mels + 1));
  }
  Matrix fb = Matrix::Zero(n_mels, bins);
  for (int m = 0; m < n_mels; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    for (int b = 0; b < bins; ++b) {
      const double f = static_cast<double>(b) * sample_rate / n_fft;
      if (f > lo && f < hi) fb(m, b) = f <= mid ? (f - lo) / (mid - lo) : (hi - f) / (hi - mid);
    }
  }
  return fb;
}

}  // namespace

Matrix log_mel(const AudioClip& clip, int n_mels, double window_s, double frame_stride_s) {
  const auto hop = static_cast<std::size_t>(std::lround(frame_stride_s * clip.sample_rate));
  const auto win = static_cast<std::size_t>(std::lround(window_s * clip.sample_rate));
  if (hop == 0 || win == 0) throw InputError("window and hop must span at least one sample");
  std::size_t n_fft = 1;
  while (n_fft < win) n_fft <<= 1;

  const Eigen::Index frames = frame_count(clip.samples.size(), clip.sample_rate, frame_stride_s);
  const Matrix fb = mel_filterbank(n_mels, static_cast<int>(n_fft), clip.sample_rate);

  std::vector<double> window(win);
  for (std::size_t i = 0; i < win; ++i) {
    window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(win));
  }

  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<double> buffer(n_fft);
  std::vector<std::complex<double>> spectrum;
  Vector power(static_cast<Eigen::Index>(n_fft / 2 + 1));
  Matrix out(frames, n_mels);
  for (Eigen::Index f = 0; f < frames; ++f) {
    std::fill(buffer.begin(), buffer.end(), 0.0);
    const std::size_t start = static_cast<std::size_t>(f) * hop;
    for (std::size_t i = 0; i < win && start + i < clip.samples.size(); ++i) {
      buffer[i] = clip.samples[start + i] * window[i];
    }
    fft.fwd(spectrum, buffer);
    for (Eigen::Index b = 0; b < power.size(); ++b) power(b) = std::norm(spectrum[static_cast<std::size_t>(b)]);
    const Vector energies = fb * power;
    for (int m = 0; m < n_mels; ++m) out(f, m) = std::log(std::max(energies(m), kLogMelFloor));
  }
  return out;
}

namespace {

void apply_activation(Matrix& x, const std::string& name) {
  if (name == "linear") return;
  if (name == "relu") {
    x = x.cwiseMax(0.0);
  } else if (name == "tanh") {
    x = x.array().tanh().matrix();
  } else if (name == "gelu") {
    x = x.unaryExpr([](double v) { return 0.5 * v * (1.0 + std::erf(v / std::numbers::sqrt2)); });
  } else {
    throw ModelError(fmt::format("unknown activation '{}'", name));
  }
}

}  // namespace

std::shared_ptr<const Encoder> Encoder::load(const EncoderConfig& cfg) {
  cfg.validate();
  std::shared_ptr<Encoder> enc(new Encoder(cfg));
  if (cfg.backend == EncoderBackend::kSpectralFallback) {
    enc->n_mels_ = cfg.feature_dim;
    return enc;
  }

  std::ifstream in(cfg.checkpoint);
  if (!in) throw ModelError(fmt::format("encoder checkpoint not found: {}", cfg.checkpoint.string()));
  json j;
  try {
    j = json::parse(in);
    if (j.at("format") != "speechcoach-encoder" || j.at("version") != 1) {
      throw ModelError("unrecognised encoder checkpoint format");
    }
    enc->n_mels_ = j.at("n_mels").get<int>();
    if (j.value("window_s", cfg.window_s) != cfg.window_s ||
        j.value("frame_stride_s", cfg.frame_stride_s) != cfg.frame_stride_s) {
      throw ModelError("encoder checkpoint framing differs from the configured framing");
    }
    Eigen::Index width = enc->n_mels_;
    for (const auto& lj : j.at("layers")) {
      EncoderLayer layer;
      layer.weight = matrix_from_json(lj.at("weight"));
      const Matrix bias = matrix_from_json(lj.at("bias"));
      layer.activation = lj.value("activation", "linear");
      if (layer.weight.cols() != width || bias.rows() != layer.weight.rows() || bias.cols() != 1) {
        throw ModelError("encoder checkpoint layer shapes are inconsistent");
      }
      layer.bias = bias.col(0);
      width = layer.weight.rows();
      enc->layers_.push_back(std::move(layer));
    }
  } catch (const json::exception& e) {
    throw ModelError(fmt::format("corrupt encoder checkpoint: {}", e.what()));
  }
  if (enc->n_mels_ <= 0 || enc->layers_.empty()) throw ModelError("encoder checkpoint has no layers");
  for (const auto& layer : enc->layers_) {
    Matrix probe = Matrix::Zero(1, 1);
    apply_activation(probe, layer.activation);
  }

  const auto n = static_cast<int>(enc->layers_.size());
  const int idx = cfg.layer < 0 ? n + cfg.layer : cfg.layer;
  if (idx < 0 || idx >= n) throw ModelError(fmt::format("encoder layer {} out of range", cfg.layer));
  enc->active_layers_ = static_cast<std::size_t>(idx) + 1;
  const auto out_dim = static_cast<int>(enc->layers_[enc->active_layers_ - 1].weight.rows());
  if (cfg.feature_dim != 0 && cfg.feature_dim != out_dim) {
    throw ModelError(fmt::format("configured feature_dim {} but encoder layer outputs {}", cfg.feature_dim, out_dim));
  }
  enc->cfg_.feature_dim = out_dim;
  return enc;
}

int Encoder::feature_dim() const {
  return cfg_.backend == EncoderBackend::kSpectralFallback ? n_mels_ : cfg_.feature_dim;
}

FeatureSequence Encoder::encode(const AudioClip& clip) const {
  if (!clip.is_canonical()) throw InputError("encode expects a canonical clip (16 kHz, 4 s)");
  FeatureSequence seq;
  seq.frame_stride_s = cfg_.frame_stride_s;
  seq.frame_offset_s = cfg_.window_s / 2.0;
  seq.frames = log_mel(clip, n_mels_, cfg_.window_s, cfg_.frame_stride_s);
  for (std::size_t i = 0; i < active_layers_; ++i) {
    const auto& layer = layers_[i];
    Matrix next = (seq.frames * layer.weight.transpose()).rowwise() + layer.bias.transpose();
    apply_activation(next, layer.activation);
    seq.frames = std::move(next);
  }
  if (!seq.frames.allFinite()) throw InputError("encoder produced non-finite features");
  return seq;
}

void save_encoder_checkpoint(const std::filesystem::path& path, int n_mels,
                             const std::vector<EncoderLayer>& layers, double window_s,
                             double frame_stride_s) {
  json j = {{"format", "speechcoach-encoder"}, {"version", 1},        {"n_mels", n_mels},
            {"window_s", window_s},            {"frame_stride_s", frame_stride_s}};
  json lj = json::array();
  for (const auto& layer : layers) {
    lj.push_back({{"weight", matrix_to_json(layer.weight)},
                  {"bias", matrix_to_json(layer.bias)},
                  {"activation", layer.activation}});
  }
  j["layers"] = std::move(lj);
  std::ofstream out(path);
  if (!out) throw ModelError(fmt::format("cannot write {}", path.string()));
  out << j.dump();
}

FeatureCache::FeatureCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::string FeatureCache::key(const AudioClip& clip, const EncoderConfig& cfg) const {
  const std::string clip_hash = sha256_hex(
      std::span(reinterpret_cast<const std::uint8_t*>(clip.samples.data()), clip.samples.size() * sizeof(float)));
  return fmt::format("{}-{}-{}", clip_hash.substr(0, 32), to_string(cfg.backend), cfg.hash().substr(0, 32));
}

std::optional<FeatureSequence> FeatureCache::get(const std::string& key) const {
  std::ifstream in(dir_ / (key + ".feat"), std::ios::binary);
  if (!in) return std::nullopt;
  std::int64_t rows = 0, cols = 0;
  FeatureSequence seq;
  in.read(reinterpret_cast<char*>(&rows), sizeof rows);
  in.read(reinterpret_cast<char*>(&cols), sizeof cols);
  in.read(reinterpret_cast<char*>(&seq.frame_stride_s), sizeof seq.frame_stride_s);
  in.read(reinterpret_cast<char*>(&seq.frame_offset_s), sizeof seq.frame_offset_s);
  if (!in || rows <= 0 || cols <= 0) return std::nullopt;
  seq.frames.resize(rows, cols);
  in.read(reinterpret_cast<char*>(seq.frames.data()), static_cast<std::streamsize>(rows * cols * sizeof(double)));
  if (!in) return std::nullopt;
  return seq;
}

void FeatureCache::put(const std::string& key, const FeatureSequence& seq) const {
  const auto final_path = dir_ / (key + ".feat");
  const auto tmp_path = dir_ / (key + ".feat.tmp");
  {
    std::ofstream out(tmp_path, std::ios::binary | std::ios::trunc);
    const std::int64_t rows = seq.frames.rows(), cols = seq.frames.cols();
    out.write(reinterpret_cast<const char*>(&rows), sizeof rows);
    out.write(reinterpret_cast<const char*>(&cols), sizeof cols);
    out.write(reinterpret_cast<const char*>(&seq.frame_stride_s), sizeof seq.frame_stride_s);
    out.write(reinterpret_cast<const char*>(&seq.frame_offset_s), sizeof seq.frame_offset_s);
    out.write(reinterpret_cast<const char*>(seq.frames.data()),
              static_cast<std::streamsize>(seq.frames.size() * sizeof(double)));
    if (!out) return;
  }
  std::filesystem::rename(tmp_path, final_path);
}

FeatureSequence FeatureCache::encode(const Encoder& encoder, const AudioClip& clip) const {
  const std::string k = key(clip, encoder.config());
  if (auto hit = get(k)) return *hit;
  FeatureSequence seq = encoder.encode(clip);
  put(k, seq);
  return seq;
}

}  // namespace speechcoach
