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

#include "speechcoach/manifest.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <fstream>
#include <map>
#include <set>

namespace speechcoach {

using nlohmann::json;

std::string_view to_string(Label label) {
  return label == Label::kNative ? "native" : "non-native";
}

Label parse_label(std::string_view text) {
  if (text == "native") return Label::kNative;
  if (text == "non-native") return Label::kNonNative;
  throw InputError(fmt::format("unknown label '{}'", text));
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::kTrain:
      return "train";
    case Split::kValidation:
      return "validation";
    case Split::kTest:
      return "test";
  }
  return "train";
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::kTrain;
  if (text == "validation") return Split::kValidation;
  if (text == "test") return Split::kTest;
  throw InputError(fmt::format("unknown split '{}'", text));
}

namespace {

UtteranceRecord parse_record(const std::string& line) {
  const json obj = json::parse(line);
  if (!obj.is_object()) throw InputError("expected a JSON object");
  auto required = [&obj](const char* key) -> std::string {
    auto it = obj.find(key);
    if (it == obj.end() || !it->is_string()) {
      throw InputError(fmt::format("missing or non-string field '{}'", key));
    }
    return it->get<std::string>();
  };
  UtteranceRecord rec;
  rec.clip_ref = required("clip_ref");
  if (rec.clip_ref.empty()) throw InputError("clip_ref is empty");
  rec.label = parse_label(required("label"));
  rec.speaker_id = required("speaker_id");
  rec.split = parse_split(required("split"));
  if (auto it = obj.find("text"); it != obj.end() && !it->is_null()) {
    if (!it->is_string()) throw InputError("field 'text' must be a string or null");
    rec.text = it->get<std::string>();
  }
  return rec;
}

}  // namespace

std::vector<UtteranceRecord> parse_manifest(std::istream& in) {
  std::vector<UtteranceRecord> records;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    UtteranceRecord rec;
    try {
      rec = parse_record(line);
    } catch (const json::exception& e) {
      throw InputError(fmt::format("manifest line {}: malformed JSON ({})", line_no, e.what()));
    } catch (const InputError& e) {
      throw InputError(fmt::format("manifest line {}: {}", line_no, e.what()));
    }
    if (!seen.insert(rec.clip_ref).second) {
      throw InputError(fmt::format("manifest line {}: duplicate clip_ref '{}'", line_no, rec.clip_ref));
    }
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<UtteranceRecord> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError(fmt::format("manifest not found: {}", path.string()));
  return parse_manifest(in);
}

void write_manifest(std::ostream& out, const std::vector<UtteranceRecord>& records) {
  for (const auto& rec : records) {
    json obj = {{"clip_ref", rec.clip_ref},
                {"label", to_string(rec.label)},
                {"speaker_id", rec.speaker_id},
                {"split", to_string(rec.split)}};
    obj["text"] = rec.text ? json(*rec.text) : json(nullptr);
    out << obj.dump() << '\n';
  }
}

void write_manifest(const std::filesystem::path& path, const std::vector<UtteranceRecord>& records) {
  std::ofstream out(path);
  if (!out) throw InputError(fmt::format("cannot write manifest {}", path.string()));
  write_manifest(out, records);
}

void check_speaker_disjoint(const std::vector<UtteranceRecord>& records) {
  std::map<std::string, Split> home;
  for (const auto& rec : records) {
    auto [it, inserted] = home.emplace(rec.speaker_id, rec.split);
    if (!inserted && it->second != rec.split) {
      throw InputError(fmt::format("speaker '{}' appears in both {} and {} splits", rec.speaker_id,
                                   to_string(it->second), to_string(rec.split)));
    }
  }
}

std::vector<UtteranceRecord> filter_split(const std::vector<UtteranceRecord>& records, Split split) {
  std::vector<UtteranceRecord> out;
  for (const auto& rec : records) {
    if (rec.split == split) out.push_back(rec);
  }
  return out;
}

std::filesystem::path resolve_clip(const UtteranceRecord& record, const std::filesystem::path& base_dir) {
  std::filesystem::path p(record.clip_ref);
  return p.is_absolute() ? p : base_dir / p;
}

}  // namespace speechcoach
