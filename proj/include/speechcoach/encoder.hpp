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

#ifndef SPEECHCOACH_ENCODER_HPP_
#define SPEECHCOACH_ENCODER_HPP_

#include "speechcoach/audio.hpp"
#include "speechcoach/types.hpp"

#include <json.hpp>

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace speechcoach {

enum class EncoderBackend { kPretrainedSsl, kSpectralFallback };

std::string_view to_string(EncoderBackend backend);
EncoderBackend parse_backend(std::string_view text);

struct EncoderConfig {
  EncoderBackend backend = EncoderBackend::kSpectralFallback;
  // Mel bands for the fallback; for the pretrained backend it must match the
  // checkpoint's output width (0 = take it from the checkpoint).
  int feature_dim = 80;
  double frame_stride_s = 0.020;
  double window_s = 0.025;
  int chunk_size_k = 5;
  // Pretrained backend only.
  std::filesystem::path checkpoint;
  // Which encoder layer to read; negative counts from the end (-1 = final).
  int layer = -1;

  void validate() const;
  // Stable identity of everything that affects encode() output. For the
  // pretrained backend this includes the checkpoint content hash.
  std::string hash() const;
  nlohmann::json to_json() const;
  static EncoderConfig from_json(const nlohmann::json& j);

  // Reads SPEECHCOACH_ENCODER_CHECKPOINT when set (selects the pretrained backend).
  static EncoderConfig from_env(EncoderConfig base);
};

struct FeatureSequence {
  Matrix frames;  // T x D
  double frame_stride_s = 0.0;
  double frame_offset_s = 0.0;  // centre of frame 0

  Eigen::Index num_frames() const { return frames.rows(); }
  Eigen::Index dim() const { return frames.cols(); }
};

struct ChunkedSequence {
  Matrix chunks;  // T' x (k * D)
  int chunk_size_k = 1;
  double chunk_stride_s = 0.0;

  Eigen::Index num_chunks() const { return chunks.rows(); }
};

// Row i = concat(frames[i*k], ..., frames[i*k + k - 1]); trailing T mod k
// frames are dropped. Throws InputError when k < 1 or k > T.
ChunkedSequence chunk(const FeatureSequence& seq, int k);

// Inverse of chunk() on the frames it kept.
Matrix dechunk(const ChunkedSequence& seq);

// Frame i analyses the window starting at i * hop (zero-padded past the end),
// so a clip of N samples yields floor(N / hop) frames: 200 for a canonical
// clip at a 20 ms hop.
Eigen::Index frame_count(std::size_t num_samples, int sample_rate, double frame_stride_s);

// Log-mel filterbank energies, D triangular bands on the HTK mel scale over
// [0, sr/2], Hann window, natural log floored at kLogMelFloor.
inline constexpr double kLogMelFloor = 1e-10;
Matrix log_mel(const AudioClip& clip, int n_mels, double window_s, double frame_stride_s);

/*
 Frozen frame-wise encoder stack applied on top of the log-mel front end.
 Checkpoint file (JSON):

   {"format": "speechcoach-encoder", "version": 1, "n_mels": 80,
    "window_s": 0.025, "frame_stride_s": 0.02,
    "layers": [{"weight": <matrix out x in>, "bias": <matrix out x 1>,
                "activation": "linear" | "relu" | "tanh" | "gelu"}, ...]}
*/
struct EncoderLayer {
  Matrix weight;
  Vector bias;
  std::string activation;
};

class Encoder {
 public:
  // Throws ModelError when the checkpoint is missing or corrupt.
  static std::shared_ptr<const Encoder> load(const EncoderConfig& cfg);

  const EncoderConfig& config() const { return cfg_; }
  int feature_dim() const;

  // Throws InputError for non-canonical clips. Deterministic.
  FeatureSequence encode(const AudioClip& clip) const;

 private:
  explicit Encoder(EncoderConfig cfg) : cfg_(std::move(cfg)) {}

  EncoderConfig cfg_;
  int n_mels_ = 0;
  std::vector<EncoderLayer> layers_;
  std::size_t active_layers_ = 0;
};

// Writes an encoder checkpoint; used by tooling and tests.
void save_encoder_checkpoint(const std::filesystem::path& path, int n_mels,
                             const std::vector<EncoderLayer>& layers,
                             double window_s = 0.025, double frame_stride_s = 0.020);

// On-disk cache of FeatureSequences keyed by (clip hash, backend, config hash).
class FeatureCache {
 public:
  explicit FeatureCache(std::filesystem::path dir);

  std::string key(const AudioClip& clip, const EncoderConfig& cfg) const;
  std::optional<FeatureSequence> get(const std::string& key) const;
  void put(const std::string& key, const FeatureSequence& seq) const;

  FeatureSequence encode(const Encoder& encoder, const AudioClip& clip) const;

 private:
  std::filesystem::path dir_;
};

}  // namespace speechcoach

#endif  // SPEECHCOACH_ENCODER_HPP_
