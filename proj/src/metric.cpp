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

#include "speechcoach/metric.hpp"

#include "speechcoach/serialize.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
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

constexpr double kNormFloor = 1e-12;
constexpr double kDistanceEps = 1e-12;

}  // namespace

EmbeddingNet EmbeddingNet::init(const EmbeddingShape& shape, std::uint64_t seed) {
  if (shape.input_dim < 1 || shape.recurrent_hidden_dim < 1 || shape.projection_hidden_dim < 1 ||
      shape.output_dim < 1) {
    throw InputError("embedding dimensions must be positive");
  }
  if (!(shape.dropout_p >= 0.0 && shape.dropout_p < 1.0)) throw InputError("dropout_p must lie in [0, 1)");
  if (shape.normalize && !(shape.scale > 0.0)) throw InputError("embedding scale must be positive");
  std::mt19937_64 rng(seed);
  EmbeddingNet net;
  net.shape = shape;
  net.scaler = nn::InputScaler::identity(shape.input_dim);
  net.recurrent = nn::Recurrent::init(shape.input_dim, shape.recurrent_hidden_dim, shape.bidirectional, rng);
  net.W1 = uniform(shape.projection_hidden_dim, net.recurrent.output_dim(), rng);
  net.b1 = Matrix::Zero(shape.projection_hidden_dim, 1);
  net.W2 = uniform(shape.output_dim, shape.projection_hidden_dim, rng);
  net.b2 = Matrix::Zero(shape.output_dim, 1);
  return net;
}

EmbeddingNet EmbeddingNet::zeros_like() const {
  EmbeddingNet g;
  g.shape = shape;
  g.scaler = scaler;
  g.recurrent = recurrent.zeros_like();
  g.W1 = Matrix::Zero(W1.rows(), W1.cols());
  g.b1 = Matrix::Zero(b1.rows(), b1.cols());
  g.W2 = Matrix::Zero(W2.rows(), W2.cols());
  g.b2 = Matrix::Zero(b2.rows(), b2.cols());
  return g;
}

std::vector<Matrix*> EmbeddingNet::blocks() {
  auto out = recurrent.blocks();
  out.insert(out.end(), {&W1, &b1, &W2, &b2});
  return out;
}

void EmbeddingNet::validate() const {
  const bool ok = recurrent.forward.input() == shape.input_dim && scaler.mean.size() == shape.input_dim &&
                  W1.cols() == recurrent.output_dim() && W1.rows() == shape.projection_hidden_dim &&
                  b1.rows() == W1.rows() && W2.cols() == W1.rows() && W2.rows() == shape.output_dim &&
                  b2.rows() == W2.rows() && shape.output_dim == 2;
  if (!ok) throw ModelError("embedding network dimensions are inconsistent");
}

json EmbeddingNet::to_json() const {
  return {{"input_dim", shape.input_dim},
          {"recurrent_hidden_dim", shape.recurrent_hidden_dim},
          {"projection_hidden_dim", shape.projection_hidden_dim},
          {"output_dim", shape.output_dim},
          {"bidirectional", shape.bidirectional},
          {"dropout_p", shape.dropout_p},
          {"normalize", shape.normalize},
          {"scale", shape.scale},
          {"perturbation_radius", perturbation_radius},
          {"scaler", scaler.to_json()},
          {"recurrent", recurrent.to_json()},
          {"W1", matrix_to_json(W1)},
          {"b1", matrix_to_json(b1)},
          {"W2", matrix_to_json(W2)},
          {"b2", matrix_to_json(b2)}};
}

EmbeddingNet EmbeddingNet::from_json(const json& j) {
  try {
    EmbeddingNet net;
    net.shape.input_dim = j.at("input_dim").get<Eigen::Index>();
    net.shape.recurrent_hidden_dim = j.at("recurrent_hidden_dim").get<Eigen::Index>();
    net.shape.projection_hidden_dim = j.at("projection_hidden_dim").get<Eigen::Index>();
    net.shape.output_dim = j.at("output_dim").get<Eigen::Index>();
    net.shape.bidirectional = j.at("bidirectional").get<bool>();
    net.shape.dropout_p = j.at("dropout_p").get<double>();
    net.shape.normalize = j.at("normalize").get<bool>();
    net.shape.scale = j.at("scale").get<double>();
    net.perturbation_radius = j.value("perturbation_radius", 0.0);
    net.scaler = nn::InputScaler::from_json(j.at("scaler"));
    net.recurrent = nn::Recurrent::from_json(j.at("recurrent"));
    net.W1 = matrix_from_json(j.at("W1"));
    net.b1 = matrix_from_json(j.at("b1"));
    net.W2 = matrix_from_json(j.at("W2"));
    net.b2 = matrix_from_json(j.at("b2"));
    net.validate();
    return net;
  } catch (const json::exception& e) {
    throw ModelError(fmt::format("malformed embedding network: {}", e.what()));
  }
}

double euclidean(const EmbeddingPoint& a, const EmbeddingPoint& b) { return std::hypot(a.x - b.x, a.y - b.y); }

double triplet_loss(double d_ap, double d_an, double margin) {
  if (d_ap < 0.0 || d_an < 0.0) throw InputError("distances must be nonnegative");
  return std::max(0.0, d_ap - d_an + margin);
}

std::vector<TripletIndex> sample_triplets(std::span<const Label> labels, std::size_t count, std::uint64_t seed) {
  std::vector<std::size_t> natives, non_natives;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    (labels[i] == Label::kNative ? natives : non_natives).push_back(i);
  }
  if (non_natives.size() < 2 || natives.empty()) {
    throw InputError(fmt::format("triplet sampling needs >= 2 non-native and >= 1 native clips (have {} and {})",
                                 non_natives.size(), natives.size()));
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick_nn(0, non_natives.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_other(0, non_natives.size() - 2);
  std::uniform_int_distribution<std::size_t> pick_native(0, natives.size() - 1);
  std::vector<TripletIndex> out;
  out.reserve(count);
  for (std::size_t n = 0; n < count; ++n) {
    const std::size_t a = pick_nn(rng);
    std::size_t p = pick_other(rng);
    if (p >= a) ++p;
    out.push_back({non_natives[a], non_natives[p], natives[pick_native(rng)]});
  }
  return out;
}

std::vector<Triplet> sample_triplets(const std::vector<UtteranceRecord>& records, std::size_t count,
                                     std::uint64_t seed) {
  std::vector<Label> labels;
  for (const auto& r : records) labels.push_back(r.label);
  std::vector<Triplet> out;
  for (const auto& t : sample_triplets(labels, count, seed)) {
    out.push_back({records[t.anchor], records[t.positive], records[t.negative]});
  }
  return out;
}

namespace {

struct EmbedForward {
  nn::Recurrent::Cache cache;
  Eigen::Index steps = 0;
  Matrix pooled;  // hidden-state x B
  Matrix pre1;    // projection x B
  Matrix act;     // relu(pre1) * mask
  Matrix mask;
  Matrix raw;     // output x B before normalisation
  Matrix out;     // output x B
};

EmbedForward forward(const EmbeddingNet& net, std::span<const Matrix* const> sequences, bool keep_cache,
                     std::mt19937_64* dropout_rng) {
  std::vector<Matrix> scaled;
  scaled.reserve(sequences.size());
  for (const Matrix* s : sequences) {
    if (s->rows() < 1 || s->cols() != net.shape.input_dim) {
      throw InputError(fmt::format("embedding input is {}x{}, expected width {}", s->rows(), s->cols(),
                                   net.shape.input_dim));
    }
    scaled.push_back(net.scaler.apply(*s));
  }
  std::vector<const Matrix*> ptrs;
  for (const auto& m : scaled) ptrs.push_back(&m);

  EmbedForward f;
  const auto outputs = net.recurrent.run(nn::to_steps(ptrs), keep_cache ? &f.cache : nullptr);
  f.steps = static_cast<Eigen::Index>(outputs.size());
  f.pooled = Matrix::Zero(net.recurrent.output_dim(), static_cast<Eigen::Index>(sequences.size()));
  for (const auto& o : outputs) f.pooled += o;
  f.pooled /= static_cast<double>(f.steps);

  f.pre1 = net.W1 * f.pooled;
  f.pre1.colwise() += net.b1.col(0);
  f.mask = dropout_rng ? nn::dropout_mask(f.pre1.rows(), f.pre1.cols(), net.shape.dropout_p, *dropout_rng)
                       : Matrix::Ones(f.pre1.rows(), f.pre1.cols());
  f.act = f.pre1.cwiseMax(0.0).cwiseProduct(f.mask);
  f.raw = net.W2 * f.act;
  f.raw.colwise() += net.b2.col(0);
  f.out = f.raw;
  if (net.shape.normalize) {
    for (Eigen::Index b = 0; b < f.out.cols(); ++b) {
      const double n = f.raw.col(b).norm();
      f.out.col(b) = n > kNormFloor ? Vector(net.shape.scale * f.raw.col(b) / n) : Vector::Zero(f.raw.rows());
    }
  }
  return f;
}

void backward(const EmbeddingNet& net, const EmbedForward& f, const Matrix& d_out, EmbeddingNet& grad) {
  Matrix d_raw = d_out;
  if (net.shape.normalize) {
    for (Eigen::Index b = 0; b < d_raw.cols(); ++b) {
      const double n = f.raw.col(b).norm();
      if (n <= kNormFloor) {
        d_raw.col(b).setZero();
        continue;
      }
      const Vector u = f.raw.col(b) / n;
      const Vector g = d_out.col(b);
      d_raw.col(b) = net.shape.scale * (g - u * u.dot(g)) / n;
    }
  }
  grad.W2.noalias() += d_raw * f.act.transpose();
  grad.b2.col(0) += d_raw.rowwise().sum();
  Matrix d_pre1 = (net.W2.transpose() * d_raw).cwiseProduct(f.mask);
  d_pre1 = d_pre1.cwiseProduct((f.pre1.array() > 0.0).cast<double>().matrix());
  grad.W1.noalias() += d_pre1 * f.pooled.transpose();
  grad.b1.col(0) += d_pre1.rowwise().sum();
  const Matrix d_pooled = net.W1.transpose() * d_pre1 / static_cast<double>(f.steps);
  std::vector<Matrix> d_outputs(static_cast<std::size_t>(f.steps), d_pooled);
  net.recurrent.backprop(f.cache, d_outputs, grad.recurrent);
}

EmbeddingPoint point_of(const Matrix& out, Eigen::Index col) { return {out(0, col), out(1, col)}; }

}  // namespace

EmbeddingPoint embed(const Matrix& chunk_rows, const EmbeddingNet& net) {
  const Matrix* seq = &chunk_rows;
  const auto f = forward(net, std::span(&seq, 1), false, nullptr);
  return point_of(f.out, 0);
}

EmbeddingPoint embed(const ChunkedSequence& chunks, const EmbeddingNet& net) { return embed(chunks.chunks, net); }

std::vector<EmbeddingPoint> embed_all(std::span<const LabeledSequence> data, const EmbeddingNet& net) {
  std::vector<EmbeddingPoint> points;
  points.reserve(data.size());
  // Batch equal-length runs; inference results do not depend on batching.
  std::size_t start = 0;
  while (start < data.size()) {
    std::size_t end = start + 1;
    while (end < data.size() && end - start < 64 && data[end].chunks.rows() == data[start].chunks.rows()) ++end;
    std::vector<const Matrix*> ptrs;
    for (std::size_t i = start; i < end; ++i) ptrs.push_back(&data[i].chunks);
    const auto f = forward(net, ptrs, false, nullptr);
    for (Eigen::Index b = 0; b < f.out.cols(); ++b) points.push_back(point_of(f.out, b));
    start = end;
  }
  return points;
}

double triplet_batch_loss(const EmbeddingNet& net, std::span<const LabeledSequence> data,
                          std::span<const TripletIndex> triplets, double margin, EmbeddingNet* grad,
                          std::mt19937_64* dropout_rng) {
  if (triplets.empty()) return 0.0;
  const auto n = static_cast<Eigen::Index>(triplets.size());
  std::vector<const Matrix*> seqs;
  for (const auto& t : triplets) seqs.push_back(&data[t.anchor].chunks);
  for (const auto& t : triplets) seqs.push_back(&data[t.positive].chunks);
  for (const auto& t : triplets) seqs.push_back(&data[t.negative].chunks);
  for (const Matrix* s : seqs) {
    if (s->rows() != seqs.front()->rows()) throw InputError("triplet batches require equal-length sequences");
  }
  const auto f = forward(net, seqs, grad != nullptr, dropout_rng);

  Matrix d_out = Matrix::Zero(f.out.rows(), f.out.cols());
  double total = 0.0;
  const double w = 1.0 / static_cast<double>(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vector a = f.out.col(i), p = f.out.col(n + i), q = f.out.col(2 * n + i);
    const double d_ap = std::sqrt((a - p).squaredNorm() + kDistanceEps);
    const double d_an = std::sqrt((a - q).squaredNorm() + kDistanceEps);
    const double loss = std::max(0.0, d_ap - d_an + margin);
    total += loss;
    if (grad && loss > 0.0) {
      const Vector g_ap = (a - p) / d_ap * w;
      const Vector g_an = (a - q) / d_an * w;
      d_out.col(i) += g_ap - g_an;
      d_out.col(n + i) -= g_ap;
      d_out.col(2 * n + i) += g_an;
    }
  }
  if (grad) backward(net, f, d_out, *grad);
  return total * w;
}

TripletEvaluation evaluate_triplets(std::span<const EmbeddingPoint> points, std::span<const TripletIndex> triplets,
                                    double margin) {
  TripletEvaluation ev;
  ev.count = triplets.size();
  if (triplets.empty()) return ev;
  std::size_t satisfied = 0;
  double total = 0.0;
  for (const auto& t : triplets) {
    const double d_ap = euclidean(points[t.anchor], points[t.positive]);
    const double d_an = euclidean(points[t.anchor], points[t.negative]);
    total += triplet_loss(d_ap, d_an, margin);
    if (d_ap + margin <= d_an) ++satisfied;
  }
  ev.mean_loss = total / static_cast<double>(triplets.size());
  ev.satisfaction = static_cast<double>(satisfied) / static_cast<double>(triplets.size());
  return ev;
}

json MetricTrainConfig::to_json() const {
  return {{"batch_size", batch_size},
          {"learning_rate", learning_rate},
          {"optimizer", "adam"},
          {"margin", margin},
          {"max_epochs", max_epochs},
          {"early_stop_patience", early_stop_patience},
          {"triplets_per_epoch", triplets_per_epoch},
          {"validation_triplets", validation_triplets},
          {"rng_seed", rng_seed}};
}

json MetricTrainingLog::to_json() const {
  json epochs_j = json::array();
  for (const auto& e : epochs) {
    epochs_j.push_back({{"epoch", e.epoch},
                        {"train_loss", e.train_loss},
                        {"train_satisfaction", e.train_satisfaction},
                        {"val_loss", e.val_loss},
                        {"val_satisfaction", e.val_satisfaction}});
  }
  return {{"epochs", epochs_j},
          {"best_epoch", best_epoch},
          {"early_stopped", early_stopped},
          {"degenerate_margin", degenerate_margin},
          {"warnings", warnings}};
}

MetricTrainingLog MetricTrainingLog::from_json(const json& j) {
  MetricTrainingLog log;
  for (const auto& e : j.at("epochs")) {
    log.epochs.push_back({e.at("epoch").get<int>(), e.at("train_loss").get<double>(),
                          e.at("train_satisfaction").get<double>(), e.at("val_loss").get<double>(),
                          e.at("val_satisfaction").get<double>()});
  }
  log.best_epoch = j.at("best_epoch").get<int>();
  log.early_stopped = j.at("early_stopped").get<bool>();
  log.degenerate_margin = j.value("degenerate_margin", false);
  log.warnings = j.value("warnings", std::vector<std::string>{});
  return log;
}

namespace {

std::vector<Label> labels_of(std::span<const LabeledSequence> data) {
  std::vector<Label> out;
  for (const auto& s : data) out.push_back(s.label);
  return out;
}

}  // namespace

TrainedEmbedding train_embedding(const std::vector<LabeledSequence>& train, const std::vector<LabeledSequence>& val,
                                 EmbeddingShape shape, const MetricTrainConfig& cfg) {
  if (cfg.batch_size < 1 || cfg.max_epochs < 1 || !(cfg.learning_rate > 0.0) || cfg.margin < 0.0) {
    throw InputError("invalid metric training configuration");
  }
  const auto train_labels = labels_of(train);
  const auto val_labels = labels_of(val);
  // Validates class populations up front.
  sample_triplets(train_labels, 1, cfg.rng_seed);
  const auto val_triplets = sample_triplets(val_labels, cfg.validation_triplets, cfg.rng_seed + 1);

  shape.input_dim = train.front().chunks.cols();
  EmbeddingNet net = EmbeddingNet::init(shape, cfg.rng_seed);
  std::vector<const Matrix*> rows;
  for (const auto& s : train) rows.push_back(&s.chunks);
  net.scaler = nn::InputScaler::fit(rows);

  TrainedEmbedding result{net, {}};
  if (cfg.margin == 0.0) {
    result.log.degenerate_margin = true;
    result.log.warnings.push_back("margin is 0: the hinge is satisfied whenever d_an >= d_ap");
  }

  std::mt19937_64 rng(cfg.rng_seed ^ 0xc2b2ae3d27d4eb4fULL);
  nn::Adam adam(cfg.learning_rate);
  const std::size_t per_epoch = cfg.triplets_per_epoch ? cfg.triplets_per_epoch : train.size();
  double best_val = std::numeric_limits<double>::infinity();
  int since_best = 0;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto triplets = sample_triplets(train_labels, per_epoch, cfg.rng_seed + 1000 + static_cast<std::uint64_t>(epoch));
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < triplets.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const auto end = std::min(triplets.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::span<const TripletIndex> batch(triplets.data() + start, end - start);
      EmbeddingNet grad = net.zeros_like();
      loss_sum += triplet_batch_loss(net, train, batch, cfg.margin, &grad, &rng) * static_cast<double>(batch.size());
      adam.step(net.blocks(), grad.blocks());
    }
    const auto train_points = embed_all(train, net);
    const auto train_eval = evaluate_triplets(train_points, triplets, cfg.margin);
    const auto val_eval = evaluate_triplets(embed_all(val, net), val_triplets, cfg.margin);
    result.log.epochs.push_back({epoch, loss_sum / static_cast<double>(triplets.size()), train_eval.satisfaction,
                                 val_eval.mean_loss, val_eval.satisfaction});
    if (val_eval.mean_loss < best_val) {
      best_val = val_eval.mean_loss;
      result.net = net;
      result.log.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.early_stop_patience) {
      result.log.early_stopped = true;
      break;
    }
  }
  return result;
}

EmbeddingPoint mean_point(std::span<const EmbeddingPoint> points) {
  if (points.empty()) throw InputError("cannot average an empty set of points");
  EmbeddingPoint m;
  for (const auto& p : points) {
    m.x += p.x;
    m.y += p.y;
  }
  m.x /= static_cast<double>(points.size());
  m.y /= static_cast<double>(points.size());
  return m;
}

EmbeddingPoint native_anchor(std::span<const LabeledSequence> natives, const EmbeddingNet& net) {
  if (natives.empty()) throw InputError("native anchor needs at least one native clip");
  for (const auto& s : natives) {
    if (s.label != Label::kNative) throw InputError("native anchor given a non-native clip");
  }
  const auto points = embed_all(natives, net);
  return mean_point(points);
}

DistanceReading distance_reading(const EmbeddingPoint& user, const EmbeddingPoint& anchor) {
  DistanceReading r;
  r.user_point = {user.x - anchor.x, user.y - anchor.y};
  r.anchor_point = {0.0, 0.0};
  r.distance = std::hypot(r.user_point.x, r.user_point.y);
  return r;
}

}  // namespace speechcoach
