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

#include "speechcoach/scorer.hpp"

#include "speechcoach/serialize.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace speechcoach {

using nlohmann::json;

namespace {

Matrix uniform(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = dist(rng);
  }
  return m;
}

Vector softmax(const RowVector& scores) {
  const double mx = scores.maxCoeff();
  Vector e = (scores.array() - mx).exp().matrix().transpose();
  return e / e.sum();
}

}  // namespace

ClassifierParams ClassifierParams::init(const ClassifierShape& shape, std::uint64_t seed) {
  if (shape.input_dim < 1 || shape.recurrent_hidden_dim < 1 || shape.attention_hidden_dim < 1) {
    throw InputError("classifier dimensions must be positive");
  }
  if (!(shape.dropout_p >= 0.0 && shape.dropout_p < 1.0)) throw InputError("dropout_p must lie in [0, 1)");
  std::mt19937_64 rng(seed);
  ClassifierParams p;
  p.shape = shape;
  p.scaler = nn::InputScaler::identity(shape.input_dim);
  p.recurrent = nn::Recurrent::init(shape.input_dim, shape.recurrent_hidden_dim, shape.bidirectional, rng);
  const Eigen::Index hd = p.hidden_state_dim();
  p.W_A1 = uniform(shape.attention_hidden_dim, hd, rng);
  p.W_A2 = uniform(1, shape.attention_hidden_dim, rng);
  p.W_S = uniform(kNumClasses, hd, rng);
  p.b_S = Matrix::Zero(kNumClasses, 1);
  return p;
}

ClassifierParams ClassifierParams::zeros_like() const {
  ClassifierParams g;
  g.shape = shape;
  g.scaler = scaler;
  g.recurrent = recurrent.zeros_like();
  g.W_A1 = Matrix::Zero(W_A1.rows(), W_A1.cols());
  g.W_A2 = Matrix::Zero(W_A2.rows(), W_A2.cols());
  g.W_S = Matrix::Zero(W_S.rows(), W_S.cols());
  g.b_S = Matrix::Zero(b_S.rows(), b_S.cols());
  return g;
}

std::vector<Matrix*> ClassifierParams::blocks() {
  auto out = recurrent.blocks();
  out.insert(out.end(), {&W_A1, &W_A2, &W_S, &b_S});
  return out;
}

void ClassifierParams::validate() const {
  const Eigen::Index hd = hidden_state_dim();
  const bool ok = recurrent.forward.input() == shape.input_dim && scaler.mean.size() == shape.input_dim &&
                  W_A1.cols() == hd && W_A2.rows() == 1 && W_A2.cols() == W_A1.rows() && W_S.rows() == 2 &&
                  W_S.cols() == hd && b_S.rows() == 2 && b_S.cols() == 1;
  if (!ok) throw ModelError("classifier parameter dimensions are inconsistent");
  if (!W_A1.allFinite() || !W_A2.allFinite() || !W_S.allFinite() || !b_S.allFinite()) {
    throw ModelError("classifier parameters contain non-finite values");
  }
}

json ClassifierParams::to_json() const {
  return {{"input_dim", shape.input_dim},
          {"recurrent_hidden_dim", shape.recurrent_hidden_dim},
          {"attention_hidden_dim", shape.attention_hidden_dim},
          {"bidirectional", shape.bidirectional},
          {"dropout_p", shape.dropout_p},
          {"scaler", scaler.to_json()},
          {"recurrent", recurrent.to_json()},
          {"W_A1", matrix_to_json(W_A1)},
          {"W_A2", matrix_to_json(W_A2)},
          {"W_S", matrix_to_json(W_S)},
          {"b_S", matrix_to_json(b_S)}};
}

ClassifierParams ClassifierParams::from_json(const json& j) {
  try {
    ClassifierParams p;
    p.shape.input_dim = j.at("input_dim").get<Eigen::Index>();
    p.shape.recurrent_hidden_dim = j.at("recurrent_hidden_dim").get<Eigen::Index>();
    p.shape.attention_hidden_dim = j.at("attention_hidden_dim").get<Eigen::Index>();
    p.shape.bidirectional = j.at("bidirectional").get<bool>();
    p.shape.dropout_p = j.at("dropout_p").get<double>();
    p.scaler = nn::InputScaler::from_json(j.at("scaler"));
    p.recurrent = nn::Recurrent::from_json(j.at("recurrent"));
    p.W_A1 = matrix_from_json(j.at("W_A1"));
    p.W_A2 = matrix_from_json(j.at("W_A2"));
    p.W_S = matrix_from_json(j.at("W_S"));
    p.b_S = matrix_from_json(j.at("b_S"));
    p.validate();
    return p;
  } catch (const json::exception& e) {
    throw ModelError(fmt::format("malformed classifier parameters: {}", e.what()));
  }
}

AttentionVector attention_weights(const Matrix& hidden_states, const ClassifierParams& params) {
  if (hidden_states.rows() < 1) throw InputError("attention needs at least one step");
  if (hidden_states.cols() != params.W_A1.cols() || params.W_A2.cols() != params.W_A1.rows()) {
    throw InputError(fmt::format("attention dimension mismatch: H has width {}, W_A1 is {}x{}, W_A2 is {}x{}",
                                 hidden_states.cols(), params.W_A1.rows(), params.W_A1.cols(), params.W_A2.rows(),
                                 params.W_A2.cols()));
  }
  const Matrix m = (params.W_A1 * hidden_states.transpose()).array().tanh().matrix();
  return {softmax(params.W_A2 * m)};
}

std::array<double, 2> softmax2(const std::array<double, 2>& logits) {
  const double mx = std::max(logits[0], logits[1]);
  const double e0 = std::exp(logits[0] - mx), e1 = std::exp(logits[1] - mx);
  return {e0 / (e0 + e1), e1 / (e0 + e1)};
}

Label argmax_label(const std::array<double, 2>& probabilities) {
  return probabilities[1] > probabilities[0] ? Label::kNonNative : Label::kNative;
}

double focal_loss(const std::array<double, 2>& probabilities, Label label, double gamma) {
  const double p = std::max(probabilities[static_cast<int>(label)], kFocalEpsilon);
  const double q = std::max(0.0, 1.0 - p);
  return -std::pow(q, gamma) * std::log(p);
}

std::array<double, 2> focal_loss_logit_grad(const std::array<double, 2>& probabilities, Label label, double gamma) {
  const int y = static_cast<int>(label);
  const double p = std::max(probabilities[y], kFocalEpsilon);
  const double q = std::max(0.0, 1.0 - p);
  // dL/dp, then chain through dp/dz_j = p (delta_jy - p_j).
  const double pow_term = q > 0.0 ? gamma * std::pow(q, gamma - 1.0) * std::log(p) : 0.0;
  const double d_p = pow_term - std::pow(q, gamma) / p;
  std::array<double, 2> g{};
  for (int j = 0; j < 2; ++j) g[j] = d_p * p * ((j == y ? 1.0 : 0.0) - probabilities[j]);
  return g;
}

namespace {

struct SequenceForward {
  Matrix H;       // hidden-state x T'
  Matrix M;       // attention_hidden x T'
  Vector alpha;   // T'
  Vector pooled;  // hidden-state
  Vector mask;    // dropout mask on pooled (ones at inference)
  std::array<double, 2> logits{};
  std::array<double, 2> probs{};
};

SequenceForward head_forward(const ClassifierParams& params, Matrix H, std::mt19937_64* dropout_rng) {
  SequenceForward f;
  f.H = std::move(H);
  f.M = (params.W_A1 * f.H).array().tanh().matrix();
  f.alpha = softmax(params.W_A2 * f.M);
  f.pooled = f.H * f.alpha;
  f.mask = dropout_rng ? Vector(nn::dropout_mask(f.pooled.size(), 1, params.shape.dropout_p, *dropout_rng).col(0))
                       : Vector::Ones(f.pooled.size());
  const Vector logits = params.W_S * f.pooled.cwiseProduct(f.mask) + params.b_S.col(0);
  f.logits = {logits(0), logits(1)};
  f.probs = softmax2(f.logits);
  return f;
}

// Gradient of the head w.r.t. its weights (accumulated in grad) and w.r.t. H (returned).
Matrix head_backward(const ClassifierParams& params, const SequenceForward& f, const std::array<double, 2>& d_logits,
                     ClassifierParams& grad) {
  const Eigen::Vector2d dl(d_logits[0], d_logits[1]);
  const Vector dropped = f.pooled.cwiseProduct(f.mask);
  grad.W_S.noalias() += dl * dropped.transpose();
  grad.b_S.col(0) += dl;
  const Vector d_pooled = (params.W_S.transpose() * dl).cwiseProduct(f.mask);

  Matrix dH = d_pooled * f.alpha.transpose();
  const Vector d_alpha = f.H.transpose() * d_pooled;
  const RowVector d_scores = (f.alpha.array() * (d_alpha.array() - f.alpha.dot(d_alpha))).matrix().transpose();
  grad.W_A2.noalias() += d_scores * f.M.transpose();
  const Matrix d_pre = ((params.W_A2.transpose() * d_scores).array() * (1.0 - f.M.array().square())).matrix();
  grad.W_A1.noalias() += d_pre * f.H.transpose();
  dH.noalias() += params.W_A1.transpose() * d_pre;
  return dH;
}

void check_input(const Matrix& chunks, const ClassifierParams& params) {
  if (chunks.rows() < 1) throw InputError("classifier input has no chunks");
  if (chunks.cols() != params.shape.input_dim) {
    throw InputError(fmt::format("chunk width {} does not match classifier input width {}", chunks.cols(),
                                 params.shape.input_dim));
  }
}

}  // namespace

ClassifierOutput classify(const Matrix& chunk_rows, const ClassifierParams& params) {
  check_input(chunk_rows, params);
  const Matrix scaled = params.scaler.apply(chunk_rows);
  const Matrix* seq = &scaled;
  const auto outputs = params.recurrent.run(nn::to_steps(std::span(&seq, 1)), nullptr);
  Matrix H(params.hidden_state_dim(), static_cast<Eigen::Index>(outputs.size()));
  for (std::size_t t = 0; t < outputs.size(); ++t) H.col(static_cast<Eigen::Index>(t)) = outputs[t].col(0);

  const SequenceForward f = head_forward(params, std::move(H), nullptr);
  ClassifierOutput out;
  out.logits = f.logits;
  out.probabilities = f.probs;
  out.predicted_label = argmax_label(f.probs);
  out.attention.weights = f.alpha;
  out.hidden_states = f.H.transpose();
  out.pooled = f.pooled;
  return out;
}

ClassifierOutput classify(const ChunkedSequence& chunks, const ClassifierParams& params) {
  return classify(chunks.chunks, params);
}

namespace {

double group_loss(const ClassifierParams& params, std::span<const LabeledSequence* const> group, double gamma,
                  double weight, ClassifierParams* grad, std::mt19937_64* dropout_rng, std::size_t* correct) {
  std::vector<Matrix> scaled;
  scaled.reserve(group.size());
  for (const auto* s : group) {
    check_input(s->chunks, params);
    scaled.push_back(params.scaler.apply(s->chunks));
  }
  std::vector<const Matrix*> ptrs;
  for (const auto& m : scaled) ptrs.push_back(&m);

  nn::Recurrent::Cache cache;
  const auto outputs = params.recurrent.run(nn::to_steps(ptrs), grad ? &cache : nullptr);
  const auto steps = static_cast<Eigen::Index>(outputs.size());
  const Eigen::Index hd = params.hidden_state_dim();

  std::vector<Matrix> d_outputs;
  if (grad) d_outputs.assign(outputs.size(), Matrix::Zero(hd, static_cast<Eigen::Index>(group.size())));

  double total = 0.0;
  for (std::size_t b = 0; b < group.size(); ++b) {
    Matrix H(hd, steps);
    for (Eigen::Index t = 0; t < steps; ++t) H.col(t) = outputs[static_cast<std::size_t>(t)].col(static_cast<Eigen::Index>(b));
    const SequenceForward f = head_forward(params, std::move(H), dropout_rng);
    const Label label = group[b]->label;
    total += focal_loss(f.probs, label, gamma);
    if (correct && argmax_label(f.probs) == label) ++*correct;
    if (grad) {
      auto dl = focal_loss_logit_grad(f.probs, label, gamma);
      dl[0] *= weight;
      dl[1] *= weight;
      const Matrix dH = head_backward(params, f, dl, *grad);
      for (Eigen::Index t = 0; t < steps; ++t) {
        d_outputs[static_cast<std::size_t>(t)].col(static_cast<Eigen::Index>(b)) = dH.col(t);
      }
    }
  }
  if (grad) params.recurrent.backprop(cache, d_outputs, grad->recurrent);
  return total;
}

double batch_loss_impl(const ClassifierParams& params, std::span<const LabeledSequence* const> batch, double gamma,
                       ClassifierParams* grad, std::mt19937_64* dropout_rng, std::size_t* correct) {
  if (batch.empty()) return 0.0;
  // Equal-length sequences share one recurrent pass.
  std::map<Eigen::Index, std::vector<const LabeledSequence*>> groups;
  for (const auto* s : batch) groups[s->chunks.rows()].push_back(s);
  const double weight = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (const auto& [len, group] : groups) total += group_loss(params, group, gamma, weight, grad, dropout_rng, correct);
  return total * weight;
}

}  // namespace

double batch_loss(const ClassifierParams& params, std::span<const LabeledSequence* const> batch, double gamma,
                  ClassifierParams* grad, std::mt19937_64* dropout_rng) {
  return batch_loss_impl(params, batch, gamma, grad, dropout_rng, nullptr);
}

json TrainConfig::to_json() const {
  return {{"batch_size", batch_size},       {"learning_rate", learning_rate},
          {"optimizer", "adam"},            {"focal_gamma", focal_gamma},
          {"max_epochs", max_epochs},       {"early_stop_patience", early_stop_patience},
          {"rng_seed", rng_seed}};
}

json TrainingLog::to_json() const {
  json epochs_j = json::array();
  for (const auto& e : epochs) {
    epochs_j.push_back({{"epoch", e.epoch},
                        {"train_loss", e.train_loss},
                        {"train_accuracy", e.train_accuracy},
                        {"val_loss", e.val_loss},
                        {"val_accuracy", e.val_accuracy}});
  }
  return {{"epochs", epochs_j}, {"best_epoch", best_epoch}, {"early_stopped", early_stopped}};
}

TrainingLog TrainingLog::from_json(const json& j) {
  TrainingLog log;
  for (const auto& e : j.at("epochs")) {
    log.epochs.push_back({e.at("epoch").get<int>(), e.at("train_loss").get<double>(),
                          e.at("train_accuracy").get<double>(), e.at("val_loss").get<double>(),
                          e.at("val_accuracy").get<double>()});
  }
  log.best_epoch = j.at("best_epoch").get<int>();
  log.early_stopped = j.at("early_stopped").get<bool>();
  return log;
}

void require_both_classes(std::span<const Label> labels, const char* what) {
  if (labels.empty()) throw InputError(fmt::format("{} split is empty", what));
  const bool native = std::ranges::find(labels, Label::kNative) != labels.end();
  const bool non_native = std::ranges::find(labels, Label::kNonNative) != labels.end();
  if (!native || !non_native) {
    throw InputError(fmt::format("{} split contains only {} examples", what,
                                 native ? "native" : "non-native"));
  }
}

namespace {

std::vector<Label> labels_of(const std::vector<LabeledSequence>& data) {
  std::vector<Label> out;
  out.reserve(data.size());
  for (const auto& s : data) out.push_back(s.label);
  return out;
}

}  // namespace

Evaluation evaluate_classifier(const ClassifierParams& params, const std::vector<LabeledSequence>& data,
                               double gamma) {
  Evaluation ev;
  ev.count = data.size();
  if (data.empty()) return ev;
  std::size_t correct = 0;
  double total = 0.0;
  constexpr std::size_t kChunk = 64;
  for (std::size_t start = 0; start < data.size(); start += kChunk) {
    std::vector<const LabeledSequence*> batch;
    for (std::size_t i = start; i < std::min(data.size(), start + kChunk); ++i) batch.push_back(&data[i]);
    total += batch_loss_impl(params, batch, gamma, nullptr, nullptr, &correct) * static_cast<double>(batch.size());
  }
  ev.mean_focal_loss = total / static_cast<double>(data.size());
  ev.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  return ev;
}

TrainedClassifier train_classifier(const std::vector<LabeledSequence>& train, const std::vector<LabeledSequence>& val,
                                   ClassifierShape shape, const TrainConfig& cfg) {
  require_both_classes(labels_of(train), "training");
  require_both_classes(labels_of(val), "validation");
  if (cfg.batch_size < 1 || cfg.max_epochs < 1 || !(cfg.learning_rate > 0.0) || cfg.focal_gamma < 0.0) {
    throw InputError("invalid training configuration");
  }
  shape.input_dim = train.front().chunks.cols();

  ClassifierParams params = ClassifierParams::init(shape, cfg.rng_seed);
  std::vector<const Matrix*> rows;
  for (const auto& s : train) rows.push_back(&s.chunks);
  params.scaler = nn::InputScaler::fit(rows);

  std::mt19937_64 rng(cfg.rng_seed ^ 0x9e3779b97f4a7c15ULL);
  nn::Adam adam(cfg.learning_rate);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  TrainedClassifier result{params, {}};
  double best_val = std::numeric_limits<double>::infinity();
  int since_best = 0;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      std::vector<const LabeledSequence*> batch;
      for (std::size_t i = start; i < std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size)); ++i) {
        batch.push_back(&train[order[i]]);
      }
      ClassifierParams grad = params.zeros_like();
      loss_sum += batch_loss_impl(params, batch, cfg.focal_gamma, &grad, &rng, &correct) *
                  static_cast<double>(batch.size());
      adam.step(params.blocks(), grad.blocks());
    }
    const Evaluation v = evaluate_classifier(params, val, cfg.focal_gamma);
    result.log.epochs.push_back({epoch, loss_sum / static_cast<double>(train.size()),
                                 static_cast<double>(correct) / static_cast<double>(train.size()), v.mean_focal_loss,
                                 v.accuracy});
    if (v.mean_focal_loss < best_val) {
      best_val = v.mean_focal_loss;
      result.params = params;
      result.log.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.early_stop_patience) {
      result.log.early_stopped = true;
      break;
    }
  }
  return result;
}

}  // namespace speechcoach
