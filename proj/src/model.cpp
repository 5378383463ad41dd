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

#include "speechcoach/model.hpp"

#include <fmt/format.h>

#include <fstream>
#include <iterator>

namespace speechcoach {

using nlohmann::json;

void ModelContainer::require_complete() const {
  if (!scorer) throw ModelError("model container has no trained scorer");
  if (!calibration) throw ModelError("model container has no calibration");
  if (!metric) throw ModelError("model container has no metric network");
}

json ModelContainer::to_json() const {
  json j = {{"format", "speechcoach-model"},
            {"version", 1},
            {"encoder", {{"config", encoder.to_json()}, {"hash", encoder_hash}}}};
  if (scorer) {
    j["scorer"] = {{"params", scorer->params.to_json()},
                   {"train_config", scorer->train_config},
                   {"log", scorer->log.to_json()}};
  }
  if (calibration) j["calibration"] = calibration->to_json();
  if (metric) {
    j["metric"] = {{"net", metric->net.to_json()},
                   {"train_config", metric->train_config},
                   {"log", metric->log.to_json()},
                   {"anchor", {metric->anchor.x, metric->anchor.y}},
                   {"margin", metric->margin}};
  }
  return j;
}

ModelContainer ModelContainer::from_json(const json& j) {
  try {
    if (j.at("format") != "speechcoach-model" || j.at("version") != 1) {
      throw ModelError("unrecognised model container format");
    }
    ModelContainer m;
    m.encoder = EncoderConfig::from_json(j.at("encoder").at("config"));
    m.encoder_hash = j.at("encoder").at("hash").get<std::string>();
    if (j.contains("scorer")) {
      const auto& s = j.at("scorer");
      m.scorer = ScorerBundle{ClassifierParams::from_json(s.at("params")), s.value("train_config", json::object()),
                              TrainingLog::from_json(s.at("log"))};
    }
    if (j.contains("calibration")) m.calibration = CalibrationModel::from_json(j.at("calibration"));
    if (j.contains("metric")) {
      const auto& mt = j.at("metric");
      const auto& anchor = mt.at("anchor");
      m.metric = MetricBundle{EmbeddingNet::from_json(mt.at("net")), mt.value("train_config", json::object()),
                              MetricTrainingLog::from_json(mt.at("log")),
                              EmbeddingPoint{anchor.at(0).get<double>(), anchor.at(1).get<double>()},
                              mt.at("margin").get<double>()};
    }
    return m;
  } catch (const json::exception& e) {
    throw ModelError(fmt::format("corrupt model container: {}", e.what()));
  } catch (const InputError& e) {
    throw ModelError(fmt::format("corrupt model container: {}", e.what()));
  }
}

void ModelContainer::save(const std::filesystem::path& path) const {
  const std::vector<std::uint8_t> bytes = json::to_cbor(to_json());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ModelError(fmt::format("cannot write {}", path.string()));
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw ModelError(fmt::format("failed writing {}", path.string()));
  }
  std::filesystem::rename(tmp, path);
}

ModelContainer ModelContainer::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelError(fmt::format("model checkpoint not found: {}", path.string()));
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  json j;
  try {
    j = json::from_cbor(bytes);
  } catch (const json::exception& e) {
    throw ModelError(fmt::format("corrupt model checkpoint {}: {}", path.string(), e.what()));
  }
  return from_json(j);
}

}  // namespace speechcoach
