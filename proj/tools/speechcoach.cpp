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

// Command-line front end: training, calibration, evaluation, offline
// analysis, the practice server and synthetic fixture generation.

#include "speechcoach/analysis.hpp"
#include "speechcoach/hashing.hpp"
#include "speechcoach/model.hpp"
#include "speechcoach/pipeline.hpp"
#include "speechcoach/service.hpp"
#include "speechcoach/synth.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <httplib.h>
#include <json.hpp>

#include <csignal>
#include <fstream>
#include <iostream>

namespace sc = speechcoach;
using nlohmann::json;

namespace {

struct EncoderOptions {
  std::string backend = "spectral_fallback";
  std::string checkpoint;
  int feature_dim = 80;
  double frame_stride_s = 0.020;
  int chunk_k = 5;
  int layer = -1;

  void add_to(CLI::App* app) {
    app->add_option("--encoder-backend", backend, "spectral_fallback | pretrained_ssl")->capture_default_str();
    app->add_option("--encoder-checkpoint", checkpoint,
                    "Encoder checkpoint (pretrained_ssl); SPEECHCOACH_ENCODER_CHECKPOINT also works");
    app->add_option("--feature-dim", feature_dim, "Mel bands (fallback) or expected encoder width")->capture_default_str();
    app->add_option("--frame-stride", frame_stride_s, "Encoder frame stride in seconds")->capture_default_str();
    app->add_option("--chunk-k", chunk_k, "Frames concatenated per classifier step")->capture_default_str();
    app->add_option("--encoder-layer", layer, "Encoder layer to read (negative counts from the end)")->capture_default_str();
  }

  sc::EncoderConfig config() const {
    sc::EncoderConfig cfg;
    cfg.backend = sc::parse_backend(backend);
    cfg.feature_dim = feature_dim;
    cfg.frame_stride_s = frame_stride_s;
    cfg.chunk_size_k = chunk_k;
    cfg.layer = layer;
    if (!checkpoint.empty()) {
      cfg.backend = sc::EncoderBackend::kPretrainedSsl;
      cfg.checkpoint = checkpoint;
    } else {
      cfg = sc::EncoderConfig::from_env(cfg);
    }
    if (cfg.backend == sc::EncoderBackend::kPretrainedSsl && feature_dim == 80) cfg.feature_dim = 0;
    return cfg;
  }
};

struct ManifestData {
  std::vector<sc::UtteranceRecord> records;
  std::filesystem::path base_dir;

  std::vector<sc::UtteranceRecord> split(sc::Split s) const { return sc::filter_split(records, s); }
};

ManifestData read_manifest(const std::string& path) {
  ManifestData m{sc::load_manifest(path), std::filesystem::path(path).parent_path()};
  sc::check_speaker_disjoint(m.records);
  return m;
}

std::vector<sc::LabeledSequence> featurize_split(const ManifestData& data, sc::Split split, const sc::Encoder& encoder,
                                                 const sc::AugmentPlan& plan, const sc::FeatureCache* cache) {
  const auto records = data.split(split);
  if (records.empty()) throw sc::InputError(fmt::format("manifest has no {} records", sc::to_string(split)));
  const auto clips = sc::load_clips(records, data.base_dir);
  return sc::featurize_all(clips, sc::labels_of(records), encoder, plan, cache);
}

std::unique_ptr<sc::FeatureCache> make_cache(const std::string& dir) {
  return dir.empty() ? nullptr : std::make_unique<sc::FeatureCache>(dir);
}

int run_train_scorer(const std::string& manifest, const std::string& out, const EncoderOptions& enc_opts,
                     sc::ClassifierShape shape, const sc::TrainConfig& cfg, std::size_t augment_copies,
                     const std::string& cache_dir) {
  const auto data = read_manifest(manifest);
  const auto enc_cfg = enc_opts.config();
  const auto encoder = sc::Encoder::load(enc_cfg);
  const auto cache = make_cache(cache_dir);
  const auto train = featurize_split(data, sc::Split::kTrain, *encoder, {augment_copies, cfg.rng_seed}, cache.get());
  const auto val = featurize_split(data, sc::Split::kValidation, *encoder, {}, cache.get());

  auto trained = sc::train_classifier(train, val, shape, cfg);
  for (const auto& e : trained.log.epochs) {
    fmt::print(stderr, "epoch {:3d}  train_loss {:.5f}  train_acc {:.3f}  val_loss {:.5f}  val_acc {:.3f}\n", e.epoch,
               e.train_loss, e.train_accuracy, e.val_loss, e.val_accuracy);
  }
  sc::ModelContainer model;
  model.encoder = encoder->config();
  model.encoder_hash = encoder->config().hash();
  json train_cfg = cfg.to_json();
  train_cfg["augment_copies"] = augment_copies;
  model.scorer = sc::ScorerBundle{std::move(trained.params), train_cfg, trained.log};
  model.save(out);
  fmt::print("scorer saved to {} (best epoch {})\n", out, trained.log.best_epoch);
  return 0;
}

std::shared_ptr<const sc::Encoder> encoder_for(const sc::ModelContainer& model) {
  auto encoder = sc::Encoder::load(model.encoder);
  if (encoder->config().hash() != model.encoder_hash) {
    throw sc::ModelError("encoder configuration differs from the one recorded in the model");
  }
  return encoder;
}

int run_calibrate(const std::string& model_path, const std::string& manifest) {
  auto model = sc::ModelContainer::load(model_path);
  if (!model.scorer) throw sc::ModelError("model has no trained scorer; run train-scorer first");
  const auto data = read_manifest(manifest);
  const auto encoder = encoder_for(model);
  const auto val = featurize_split(data, sc::Split::kValidation, *encoder, {}, nullptr);
  model.calibration = sc::fit_calibration(model.scorer->params, val);
  model.save(model_path);
  const auto& c = *model.calibration;
  fmt::print("temperature {:.6f}\nnll {:.6f} -> {:.6f}\nece {:.6f} -> {:.6f}\n", c.temperature, c.nll_before,
             c.nll_after, c.ece_before, c.ece_after);
  if (c.degenerate) fmt::print(stderr, "warning: validation logits are all identical; temperature left at 1\n");
  return 0;
}

int run_train_metric(const std::string& model_path, const std::string& manifest, sc::EmbeddingShape shape,
                     const sc::MetricTrainConfig& cfg, std::size_t augment_copies) {
  auto model = sc::ModelContainer::load(model_path);
  const auto data = read_manifest(manifest);
  const auto encoder = encoder_for(model);
  const auto train_records = data.split(sc::Split::kTrain);
  const auto val_records = data.split(sc::Split::kValidation);
  const auto train_clips = sc::load_clips(train_records, data.base_dir);
  const auto val_clips = sc::load_clips(val_records, data.base_dir);
  const auto train =
      sc::featurize_all(train_clips, sc::labels_of(train_records), *encoder, {augment_copies, cfg.rng_seed});
  const auto val = sc::featurize_all(val_clips, sc::labels_of(val_records), *encoder);

  auto trained = sc::train_embedding(train, val, shape, cfg);
  for (const auto& e : trained.log.epochs) {
    fmt::print(stderr, "epoch {:3d}  train_loss {:.5f}  train_sat {:.3f}  val_loss {:.5f}  val_sat {:.3f}\n", e.epoch,
               e.train_loss, e.train_satisfaction, e.val_loss, e.val_satisfaction);
  }
  for (const auto& w : trained.log.warnings) fmt::print(stderr, "warning: {}\n", w);
  trained.net.perturbation_radius = sc::measure_perturbation_radius(val_clips, *encoder, trained.net, 30.0, 2, cfg.rng_seed);

  std::vector<sc::LabeledSequence> natives;
  for (std::size_t i = 0; i < train_records.size(); ++i) {
    if (train_records[i].label == sc::Label::kNative) natives.push_back(train[i]);
  }
  const auto anchor = sc::native_anchor(natives, trained.net);
  json train_cfg = cfg.to_json();
  train_cfg["augment_copies"] = augment_copies;
  model.metric = sc::MetricBundle{std::move(trained.net), train_cfg, trained.log, anchor, cfg.margin};
  model.save(model_path);
  fmt::print("metric saved to {} (best epoch {}, anchor ({:.4f}, {:.4f}), perturbation radius {:.4f})\n", model_path,
             trained.log.best_epoch, anchor.x, anchor.y, model.metric->net.perturbation_radius);
  return 0;
}

int run_evaluate(const std::string& model_path, const std::string& manifest, const std::string& split_name,
                 std::size_t triplets, bool as_json) {
  const auto model = sc::ModelContainer::load(model_path);
  if (!model.scorer) throw sc::ModelError("model has no trained scorer");
  const auto data = read_manifest(manifest);
  const auto encoder = encoder_for(model);
  const auto test = featurize_split(data, sc::parse_split(split_name), *encoder, {}, nullptr);
  const double gamma = model.scorer->train_config.value("focal_gamma", 2.0);

  const auto ev = sc::evaluate_classifier(model.scorer->params, test, gamma);
  json report = {{"split", split_name}, {"count", ev.count}, {"accuracy", ev.accuracy}, {"focal_loss", ev.mean_focal_loss}};

  std::vector<std::array<double, 2>> probs;
  std::vector<sc::Label> labels;
  const double temperature = model.calibration ? model.calibration->temperature : 1.0;
  for (const auto& s : test) {
    probs.push_back(sc::calibrated_probabilities(sc::classify(s.chunks, model.scorer->params).logits, temperature));
    labels.push_back(s.label);
  }
  report["ece"] = sc::expected_calibration_error(probs, labels);
  report["temperature"] = temperature;
  if (model.metric) {
    const auto points = sc::embed_all(test, model.metric->net);
    const auto idx = sc::sample_triplets(labels, triplets, 12345);
    report["triplet_satisfaction"] = sc::evaluate_triplets(points, idx, model.metric->margin).satisfaction;
  }
  if (as_json) {
    fmt::print("{}\n", report.dump(2));
  } else {
    fmt::print("split: {}\ncount: {}\naccuracy: {:.4f}\nfocal_loss: {:.6f}\nece: {:.6f}\n", split_name, ev.count,
               ev.accuracy, ev.mean_focal_loss, report["ece"].get<double>());
    if (report.contains("triplet_satisfaction")) {
      fmt::print("triplet_satisfaction: {:.4f}\n", report["triplet_satisfaction"].get<double>());
    }
  }
  return 0;
}

int run_analyze_file(const std::string& model_path, const std::string& audio_path, const std::string& sentence_id) {
  auto model = std::make_shared<const sc::ModelContainer>(sc::ModelContainer::load(model_path));
  const sc::Analyzer analyzer(model);
  std::ifstream in(audio_path, std::ios::binary);
  if (!in) throw sc::InputError(fmt::format("cannot open audio file {}", audio_path));
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  auto result = analyzer.analyze(sc::decode_wav(bytes));
  // Offline results are content-addressed and carry timestamp 0.
  result.result_id = "offline-" + sc::sha256_hex(bytes).substr(0, 24);
  result.sentence_id = sentence_id;
  result.timestamp_ms = 0;
  fmt::print("{}\n", result.to_json().dump(2));
  return 0;
}

httplib::Server* g_server = nullptr;

void handle_signal(int) {
  if (g_server) g_server->stop();
}

int run_serve(sc::ServiceConfig cfg) {
  cfg.apply_env();
  std::shared_ptr<const sc::ModelContainer> model;
  if (cfg.model.empty()) throw sc::ModelError("no model checkpoint given (--model or SPEECHCOACH_MODEL)");
  model = std::make_shared<const sc::ModelContainer>(sc::ModelContainer::load(cfg.model));
  model->require_complete();
  auto catalog = cfg.sentences.empty() ? sc::SentenceCatalog() : sc::SentenceCatalog::load(cfg.sentences);
  auto store = std::make_shared<sc::SessionStore>(cfg.session_db);
  const sc::PracticeService service(model, std::move(catalog), store, cfg.analysis);

  httplib::Server server;
  // SO_REUSEPORT (the library default) would let a second server share a busy port.
  server.set_socket_options([](socket_t sock) {
    int yes = 1;
    ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });
  service.mount(server);
  if (!cfg.static_dir.empty() && !server.set_mount_point("/", cfg.static_dir.string())) {
    throw sc::InputError(fmt::format("static directory not found: {}", cfg.static_dir.string()));
  }
  if (!server.bind_to_port(cfg.host, cfg.port)) {
    fmt::print(stderr, "error: cannot bind {}:{} (port in use?)\n", cfg.host, cfg.port);
    return 3;
  }
  g_server = &server;
  std::signal(SIGINT, handle_signal);
  std::signal(SIGTERM, handle_signal);
  fmt::print("serving on http://{}:{}\n", cfg.host, cfg.port);
  std::fflush(stdout);
  server.listen_after_bind();
  return 0;
}

int run_synth(const std::string& out_dir, const sc::synth::CorpusSpec& spec) {
  const auto corpus = sc::synth::generate(spec);
  const auto manifest = sc::synth::write_corpus(corpus, out_dir);
  // A small sentence catalog whose exemplar audio is the first native clip.
  std::string exemplar;
  for (const auto& r : corpus.records) {
    if (r.label == sc::Label::kNative) {
      exemplar = r.clip_ref;
      break;
    }
  }
  json catalog = {{"sentences",
                   {{{"sentence_id", "s1"}, {"text", "The quick brown fox jumps over the lazy dog."}, {"model_audio", exemplar}},
                    {{"sentence_id", "s2"}, {"text", "She sells seashells by the seashore."}, {"model_audio", nullptr}}}}};
  std::ofstream(std::filesystem::path(out_dir) / "sentences.json") << catalog.dump(2) << '\n';
  fmt::print("wrote {} clips; manifest {}\n", corpus.records.size(), manifest.string());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"speechcoach: pronunciation scoring, difference highlighting and distance feedback"};
  app.require_subcommand(1);

  // train-scorer
  auto* train_scorer = app.add_subcommand("train-scorer", "Train the native/non-native classifier");
  std::string ts_manifest, ts_out, ts_cache;
  EncoderOptions ts_enc;
  sc::ClassifierShape ts_shape;
  sc::TrainConfig ts_cfg;
  std::size_t ts_aug = 1;
  bool ts_unidirectional = false;
  train_scorer->add_option("--manifest", ts_manifest, "Manifest with train and validation splits")->required();
  train_scorer->add_option("--out", ts_out, "Output model checkpoint")->required();
  train_scorer->add_option("--seed", ts_cfg.rng_seed)->capture_default_str();
  train_scorer->add_option("--epochs", ts_cfg.max_epochs)->capture_default_str();
  train_scorer->add_option("--batch-size", ts_cfg.batch_size)->capture_default_str();
  train_scorer->add_option("--lr", ts_cfg.learning_rate)->capture_default_str();
  train_scorer->add_option("--gamma", ts_cfg.focal_gamma, "Focal loss gamma")->capture_default_str();
  train_scorer->add_option("--patience", ts_cfg.early_stop_patience)->capture_default_str();
  train_scorer->add_option("--hidden", ts_shape.recurrent_hidden_dim)->capture_default_str();
  train_scorer->add_option("--attention-hidden", ts_shape.attention_hidden_dim)->capture_default_str();
  train_scorer->add_option("--dropout", ts_shape.dropout_p)->capture_default_str();
  train_scorer->add_flag("--unidirectional", ts_unidirectional);
  train_scorer->add_option("--augment-copies", ts_aug, "Augmented copies per training clip")->capture_default_str();
  train_scorer->add_option("--cache-dir", ts_cache, "Feature cache directory");
  ts_enc.add_to(train_scorer);

  // calibrate
  auto* calibrate = app.add_subcommand("calibrate", "Fit temperature scaling on the validation split");
  std::string cal_model, cal_manifest;
  calibrate->add_option("--model", cal_model)->required();
  calibrate->add_option("--manifest", cal_manifest)->required();

  // train-metric
  auto* train_metric = app.add_subcommand("train-metric", "Train the 2-D triplet embedding and native anchor");
  std::string tm_model, tm_manifest;
  sc::EmbeddingShape tm_shape;
  sc::MetricTrainConfig tm_cfg;
  std::size_t tm_aug = 0;
  bool tm_unidirectional = false, tm_no_normalize = false;
  train_metric->add_option("--model", tm_model)->required();
  train_metric->add_option("--manifest", tm_manifest)->required();
  train_metric->add_option("--seed", tm_cfg.rng_seed)->capture_default_str();
  train_metric->add_option("--epochs", tm_cfg.max_epochs)->capture_default_str();
  train_metric->add_option("--batch-size", tm_cfg.batch_size)->capture_default_str();
  train_metric->add_option("--lr", tm_cfg.learning_rate)->capture_default_str();
  train_metric->add_option("--margin", tm_cfg.margin)->capture_default_str();
  train_metric->add_option("--patience", tm_cfg.early_stop_patience)->capture_default_str();
  train_metric->add_option("--triplets-per-epoch", tm_cfg.triplets_per_epoch)->capture_default_str();
  train_metric->add_option("--hidden", tm_shape.recurrent_hidden_dim)->capture_default_str();
  train_metric->add_option("--projection-hidden", tm_shape.projection_hidden_dim)->capture_default_str();
  train_metric->add_option("--dropout", tm_shape.dropout_p)->capture_default_str();
  train_metric->add_option("--scale", tm_shape.scale, "Radius of normalised embeddings")->capture_default_str();
  train_metric->add_flag("--no-normalize", tm_no_normalize);
  train_metric->add_flag("--unidirectional", tm_unidirectional);
  train_metric->add_option("--augment-copies", tm_aug)->capture_default_str();

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Report accuracy, focal loss, ECE and triplet satisfaction");
  std::string ev_model, ev_manifest, ev_split = "test";
  std::size_t ev_triplets = 1000;
  bool ev_json = false;
  evaluate->add_option("--model", ev_model)->required();
  evaluate->add_option("--manifest", ev_manifest)->required();
  evaluate->add_option("--split", ev_split)->capture_default_str();
  evaluate->add_option("--triplets", ev_triplets)->capture_default_str();
  evaluate->add_flag("--json", ev_json);

  // analyze-file
  auto* analyze = app.add_subcommand("analyze-file", "Analyze one WAV file and print an AnalysisResult");
  std::string an_model, an_audio, an_sentence;
  analyze->add_option("--model", an_model)->required();
  analyze->add_option("--audio", an_audio)->required();
  analyze->add_option("--sentence-id", an_sentence);

  // serve
  auto* serve = app.add_subcommand("serve", "Run the practice HTTP service");
  std::string sv_config, sv_model, sv_sentences, sv_db, sv_static, sv_host;
  int sv_port = 0;
  serve->add_option("--config", sv_config, "Service config file");
  serve->add_option("--model", sv_model, "Model checkpoint (or SPEECHCOACH_MODEL)");
  serve->add_option("--sentences", sv_sentences, "Sentence catalog");
  serve->add_option("--db", sv_db, "Session store file");
  serve->add_option("--static-dir", sv_static, "Directory of web UI assets");
  serve->add_option("--host", sv_host);
  serve->add_option("--port", sv_port);

  // synth-corpus
  auto* synth = app.add_subcommand("synth-corpus", "Write a synthetic native/non-native fixture corpus");
  std::string sy_out;
  sc::synth::CorpusSpec sy_spec;
  synth->add_option("--out", sy_out)->required();
  synth->add_option("--seed", sy_spec.seed)->capture_default_str();
  synth->add_option("--train-per-class", sy_spec.train_per_class)->capture_default_str();
  synth->add_option("--val-per-class", sy_spec.val_per_class)->capture_default_str();
  synth->add_option("--test-per-class", sy_spec.test_per_class)->capture_default_str();
  synth->add_option("--clips-per-speaker", sy_spec.clips_per_speaker)->capture_default_str();
  synth->add_option("--separation", sy_spec.separation)->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_scorer) {
      ts_shape.bidirectional = !ts_unidirectional;
      return run_train_scorer(ts_manifest, ts_out, ts_enc, ts_shape, ts_cfg, ts_aug, ts_cache);
    }
    if (*calibrate) return run_calibrate(cal_model, cal_manifest);
    if (*train_metric) {
      tm_shape.bidirectional = !tm_unidirectional;
      tm_shape.normalize = !tm_no_normalize;
      return run_train_metric(tm_model, tm_manifest, tm_shape, tm_cfg, tm_aug);
    }
    if (*evaluate) return run_evaluate(ev_model, ev_manifest, ev_split, ev_triplets, ev_json);
    if (*analyze) return run_analyze_file(an_model, an_audio, an_sentence);
    if (*serve) {
      sc::ServiceConfig cfg = sv_config.empty() ? sc::ServiceConfig{} : sc::ServiceConfig::load(sv_config);
      if (!sv_model.empty()) cfg.model = sv_model;
      if (!sv_sentences.empty()) cfg.sentences = sv_sentences;
      if (!sv_db.empty()) cfg.session_db = sv_db;
      if (!sv_static.empty()) cfg.static_dir = sv_static;
      if (!sv_host.empty()) cfg.host = sv_host;
      if (sv_port != 0) cfg.port = sv_port;
      return run_serve(cfg);
    }
    if (*synth) return run_synth(sy_out, sy_spec);
  } catch (const sc::ModelError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
  return 1;
}
