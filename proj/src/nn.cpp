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

#include "speechcoach/nn.hpp"

#include "speechcoach/serialize.hpp"

#include <fmt/format.h>

#include <cmath>

namespace speechcoach::nn {

using nlohmann::json;

namespace {

Matrix uniform(Eigen::Index rows, Eigen::Index cols, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = dist(rng);
  }
  return m;
}

}  // namespace

LstmWeights LstmWeights::init(Eigen::Index input, Eigen::Index hidden, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  LstmWeights w;
  w.W = uniform(4 * hidden, input, bound, rng);
  w.U = uniform(4 * hidden, hidden, bound, rng);
  w.b = Matrix::Zero(4 * hidden, 1);
  w.b.block(hidden, 0, hidden, 1).setOnes();
  return w;
}

LstmWeights LstmWeights::zeros_like(const LstmWeights& w) {
  return {Matrix::Zero(w.W.rows(), w.W.cols()), Matrix::Zero(w.U.rows(), w.U.cols()),
          Matrix::Zero(w.b.rows(), w.b.cols())};
}

Recurrent Recurrent::init(Eigen::Index input, Eigen::Index hidden, bool bidirectional, std::mt19937_64& rng) {
  Recurrent r;
  r.bidirectional = bidirectional;
  r.forward = LstmWeights::init(input, hidden, rng);
  if (bidirectional) r.backward = LstmWeights::init(input, hidden, rng);
  return r;
}

Recurrent Recurrent::zeros_like() const {
  Recurrent r;
  r.bidirectional = bidirectional;
  r.forward = LstmWeights::zeros_like(forward);
  if (bidirectional) r.backward = LstmWeights::zeros_like(backward);
  return r;
}

std::vector<Matrix*> Recurrent::blocks() {
  std::vector<Matrix*> out = {&forward.W, &forward.U, &forward.b};
  if (bidirectional) out.insert(out.end(), {&backward.W, &backward.U, &backward.b});
  return out;
}

namespace {

void run_direction(const LstmWeights& w, const Matrix& x, Eigen::Index steps, Eigen::Index batch,
                   bool reverse, Recurrent::DirectionCache& cache) {
  const Eigen::Index h = w.hidden();
  Matrix pre = w.W * x;
  pre.colwise() += w.b.col(0);

  for (auto* v : {&cache.i, &cache.f, &cache.g, &cache.o, &cache.c, &cache.tanh_c, &cache.h}) {
    v->assign(static_cast<std::size_t>(steps), Matrix());
  }
  Matrix h_prev = Matrix::Zero(h, batch);
  Matrix c_prev = Matrix::Zero(h, batch);
  for (Eigen::Index n = 0; n < steps; ++n) {
    const Eigen::Index t = reverse ? steps - 1 - n : n;
    const auto ti = static_cast<std::size_t>(t);
    Matrix gates = pre.middleCols(t * batch, batch);
    gates.noalias() += w.U * h_prev;
    cache.i[ti] = gates.topRows(h).unaryExpr([](double v) { return sigmoid(v); });
    cache.f[ti] = gates.middleRows(h, h).unaryExpr([](double v) { return sigmoid(v); });
    cache.g[ti] = gates.middleRows(2 * h, h).array().tanh().matrix();
    cache.o[ti] = gates.bottomRows(h).unaryExpr([](double v) { return sigmoid(v); });
    cache.c[ti] = cache.f[ti].cwiseProduct(c_prev) + cache.i[ti].cwiseProduct(cache.g[ti]);
    cache.tanh_c[ti] = cache.c[ti].array().tanh().matrix();
    cache.h[ti] = cache.o[ti].cwiseProduct(cache.tanh_c[ti]);
    h_prev = cache.h[ti];
    c_prev = cache.c[ti];
  }
}

void backprop_direction(const LstmWeights& w, const Matrix& x, const Recurrent::DirectionCache& cache,
                        const std::vector<Matrix>& d_outputs, Eigen::Index row_offset, Eigen::Index steps,
                        Eigen::Index batch, bool reverse, LstmWeights& grad) {
  const Eigen::Index h = w.hidden();
  Matrix d_gates_all(4 * h, steps * batch);
  Matrix dh_next = Matrix::Zero(h, batch);
  Matrix dc_next = Matrix::Zero(h, batch);
  const Matrix zeros = Matrix::Zero(h, batch);

  for (Eigen::Index n = steps - 1; n >= 0; --n) {
    const Eigen::Index t = reverse ? steps - 1 - n : n;
    const Eigen::Index t_prev = reverse ? t + 1 : t - 1;
    const bool has_prev = n > 0;
    const auto ti = static_cast<std::size_t>(t);
    const Matrix& c_prev = has_prev ? cache.c[static_cast<std::size_t>(t_prev)] : zeros;
    const Matrix& h_prev = has_prev ? cache.h[static_cast<std::size_t>(t_prev)] : zeros;

    const Matrix dh = d_outputs[ti].middleRows(row_offset, h) + dh_next;
    const auto& i = cache.i[ti].array();
    const auto& f = cache.f[ti].array();
    const auto& g = cache.g[ti].array();
    const auto& o = cache.o[ti].array();
    const auto& tc = cache.tanh_c[ti].array();

    const Eigen::ArrayXXd dc = dh.array() * o * (1.0 - tc.square()) + dc_next.array();
    auto d_gates = d_gates_all.middleCols(t * batch, batch);
    d_gates.topRows(h) = (dc * g * i * (1.0 - i)).matrix();
    d_gates.middleRows(h, h) = (dc * c_prev.array() * f * (1.0 - f)).matrix();
    d_gates.middleRows(2 * h, h) = (dc * i * (1.0 - g.square())).matrix();
    d_gates.bottomRows(h) = (dh.array() * tc * o * (1.0 - o)).matrix();

    grad.U.noalias() += d_gates * h_prev.transpose();
    dh_next.noalias() = w.U.transpose() * d_gates;
    dc_next = (dc * f).matrix();
  }
  grad.W.noalias() += d_gates_all * x.transpose();
  grad.b += d_gates_all.rowwise().sum();
}

}  // namespace

std::vector<Matrix> Recurrent::run(const std::vector<Matrix>& inputs, Cache* cache) const {
  if (inputs.empty()) throw InputError("recurrent layer needs at least one step");
  const auto steps = static_cast<Eigen::Index>(inputs.size());
  const Eigen::Index batch = inputs[0].cols();
  if (inputs[0].rows() != forward.input()) {
    throw InputError(fmt::format("recurrent input width {} does not match weights ({})", inputs[0].rows(),
                                 forward.input()));
  }
  Cache local;
  Cache& c = cache ? *cache : local;
  c.steps = steps;
  c.batch = batch;
  c.inputs.resize(forward.input(), steps * batch);
  for (Eigen::Index t = 0; t < steps; ++t) c.inputs.middleCols(t * batch, batch) = inputs[static_cast<std::size_t>(t)];

  run_direction(forward, c.inputs, steps, batch, false, c.fwd);
  if (bidirectional) run_direction(backward, c.inputs, steps, batch, true, c.bwd);

  const Eigen::Index h = forward.hidden();
  std::vector<Matrix> out(static_cast<std::size_t>(steps));
  for (std::size_t t = 0; t < out.size(); ++t) {
    out[t].resize(output_dim(), batch);
    out[t].topRows(h) = c.fwd.h[t];
    if (bidirectional) out[t].bottomRows(h) = c.bwd.h[t];
  }
  return out;
}

void Recurrent::backprop(const Cache& cache, const std::vector<Matrix>& d_outputs, Recurrent& grad) const {
  backprop_direction(forward, cache.inputs, cache.fwd, d_outputs, 0, cache.steps, cache.batch, false, grad.forward);
  if (bidirectional) {
    backprop_direction(backward, cache.inputs, cache.bwd, d_outputs, forward.hidden(), cache.steps, cache.batch,
                       true, grad.backward);
  }
}

json Recurrent::to_json() const {
  auto dir = [](const LstmWeights& w) {
    return json{{"W", matrix_to_json(w.W)}, {"U", matrix_to_json(w.U)}, {"b", matrix_to_json(w.b)}};
  };
  json j = {{"bidirectional", bidirectional}, {"forward", dir(forward)}};
  if (bidirectional) j["backward"] = dir(backward);
  return j;
}

Recurrent Recurrent::from_json(const json& j) {
  auto dir = [](const json& d) {
    LstmWeights w{matrix_from_json(d.at("W")), matrix_from_json(d.at("U")), matrix_from_json(d.at("b"))};
    const Eigen::Index h = w.U.cols();
    if (w.U.rows() != 4 * h || w.W.rows() != 4 * h || w.b.rows() != 4 * h || w.b.cols() != 1) {
      throw ModelError("inconsistent LSTM weight shapes");
    }
    return w;
  };
  Recurrent r;
  r.bidirectional = j.at("bidirectional").get<bool>();
  r.forward = dir(j.at("forward"));
  if (r.bidirectional) {
    r.backward = dir(j.at("backward"));
    if (r.backward.W.cols() != r.forward.W.cols() || r.backward.hidden() != r.forward.hidden()) {
      throw ModelError("LSTM directions disagree in shape");
    }
  }
  return r;
}

void Adam::step(std::span<Matrix* const> params, std::span<Matrix* const> grads) {
  if (params.size() != grads.size()) throw InputError("Adam: parameter/gradient block count mismatch");
  if (m_.empty()) {
    for (const Matrix* p : params) {
      m_.push_back(Matrix::Zero(p->rows(), p->cols()));
      v_.push_back(Matrix::Zero(p->rows(), p->cols()));
    }
  }
  ++step_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    const Matrix& g = *grads[k];
    m_[k] = beta1_ * m_[k] + (1.0 - beta1_) * g;
    v_[k] = beta2_ * v_[k] + (1.0 - beta2_) * g.cwiseAbs2();
    params[k]->array() -= lr_ * (m_[k].array() / bc1) / ((v_[k].array() / bc2).sqrt() + eps_);
  }
}

Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, std::mt19937_64& rng) {
  if (p <= 0.0) return Matrix::Ones(rows, cols);
  std::bernoulli_distribution keep(1.0 - p);
  const double scale = 1.0 / (1.0 - p);
  Matrix m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = keep(rng) ? scale : 0.0;
  }
  return m;
}

InputScaler InputScaler::identity(Eigen::Index dim) { return {Vector::Zero(dim), Vector::Ones(dim)}; }

InputScaler InputScaler::fit(std::span<const Matrix* const> rows_matrices) {
  if (rows_matrices.empty()) throw InputError("cannot fit a scaler on no data");
  const Eigen::Index dim = rows_matrices.front()->cols();
  Vector sum = Vector::Zero(dim), sq = Vector::Zero(dim);
  double n = 0.0;
  for (const Matrix* m : rows_matrices) {
    sum += m->colwise().sum().transpose();
    n += static_cast<double>(m->rows());
  }
  const Vector mean = sum / n;
  for (const Matrix* m : rows_matrices) sq += (m->rowwise() - mean.transpose()).colwise().squaredNorm().transpose();
  Vector scale = (sq / n).cwiseSqrt().unaryExpr([](double s) { return 1.0 / std::max(s, 1e-6); });
  return {mean, scale};
}

Matrix InputScaler::apply(const Matrix& rows) const {
  return ((rows.rowwise() - mean.transpose()).array().rowwise() * scale.transpose().array()).matrix();
}

json InputScaler::to_json() const {
  return {{"mean", matrix_to_json(mean)}, {"scale", matrix_to_json(scale)}};
}

InputScaler InputScaler::from_json(const json& j) {
  InputScaler s{matrix_from_json(j.at("mean")).col(0), matrix_from_json(j.at("scale")).col(0)};
  if (s.mean.size() != s.scale.size()) throw ModelError("scaler mean/scale size mismatch");
  return s;
}

std::vector<Matrix> to_steps(std::span<const Matrix* const> sequences) {
  if (sequences.empty()) return {};
  const Eigen::Index steps = sequences.front()->rows();
  const Eigen::Index dim = sequences.front()->cols();
  const auto batch = static_cast<Eigen::Index>(sequences.size());
  std::vector<Matrix> out(static_cast<std::size_t>(steps), Matrix(dim, batch));
  for (Eigen::Index b = 0; b < batch; ++b) {
    const Matrix& s = *sequences[static_cast<std::size_t>(b)];
    if (s.rows() != steps || s.cols() != dim) throw InputError("batched sequences must share shape");
    for (Eigen::Index t = 0; t < steps; ++t) out[static_cast<std::size_t>(t)].col(b) = s.row(t).transpose();
  }
  return out;
}

}  // namespace speechcoach::nn
