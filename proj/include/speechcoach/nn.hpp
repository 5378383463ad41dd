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

#ifndef SPEECHCOACH_NN_HPP_
#define SPEECHCOACH_NN_HPP_

#include "speechcoach/types.hpp"

#include <json.hpp>

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace speechcoach::nn {

// One LSTM direction. Gate rows are stacked [input; forget; cell; output].
struct LstmWeights {
  Matrix W;  // 4H x In
  Matrix U;  // 4H x H
  Matrix b;  // 4H x 1

  Eigen::Index hidden() const { return U.cols(); }
  Eigen::Index input() const { return W.cols(); }

  static LstmWeights init(Eigen::Index input, Eigen::Index hidden, std::mt19937_64& rng);
  static LstmWeights zeros_like(const LstmWeights& w);
};

// Single-layer LSTM, optionally bidirectional, over a batch of equal-length
// sequences. Step t of the input is an (In x B) matrix; step t of the output
// stacks [forward h_t; backward h_t] as (dirs*H x B).
struct Recurrent {
  LstmWeights forward;
  LstmWeights backward;  // empty when unidirectional
  bool bidirectional = true;

  Eigen::Index output_dim() const { return forward.hidden() * (bidirectional ? 2 : 1); }

  static Recurrent init(Eigen::Index input, Eigen::Index hidden, bool bidirectional, std::mt19937_64& rng);
  Recurrent zeros_like() const;
  std::vector<Matrix*> blocks();

  struct DirectionCache {
    std::vector<Matrix> i, f, g, o, c, tanh_c, h;
  };
  struct Cache {
    Matrix inputs;  // In x (T*B), column t*B + b
    Eigen::Index steps = 0;
    Eigen::Index batch = 0;
    DirectionCache fwd, bwd;
  };

  std::vector<Matrix> run(const std::vector<Matrix>& inputs, Cache* cache) const;
  // Accumulates weight gradients into `grad`; inputs are not differentiated.
  void backprop(const Cache& cache, const std::vector<Matrix>& d_outputs, Recurrent& grad) const;

  nlohmann::json to_json() const;
  static Recurrent from_json(const nlohmann::json& j);
};

class Adam {
 public:
  explicit Adam(double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(std::span<Matrix* const> params, std::span<Matrix* const> grads);

 private:
  double lr_, beta1_, beta2_, eps_;
  long step_ = 0;
  std::vector<Matrix> m_, v_;
};

// Inverted dropout mask: entries are 0 or 1/(1-p).
Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, std::mt19937_64& rng);

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Per-dimension standardisation fitted on training data.
struct InputScaler {
  Vector mean;
  Vector scale;  // 1 / std

  static InputScaler identity(Eigen::Index dim);
  static InputScaler fit(std::span<const Matrix* const> rows_matrices);
  Matrix apply(const Matrix& rows) const;  // rows are samples

  nlohmann::json to_json() const;
  static InputScaler from_json(const nlohmann::json& j);
};

// Splits T' x In row matrices (all with the same T') into T step matrices of In x B.
std::vector<Matrix> to_steps(std::span<const Matrix* const> sequences);

}  // namespace speechcoach::nn

#endif  // SPEECHCOACH_NN_HPP_
