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

#ifndef SPEECHCOACH_MANIFEST_HPP_
#define SPEECHCOACH_MANIFEST_HPP_

#include "speechcoach/types.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace speechcoach {

enum class Split { kTrain, kValidation, kTest };

std::string_view to_string(Split split);
Split parse_split(std::string_view text);

struct UtteranceRecord {
  std::string clip_ref;
  Label label = Label::kNative;
  std::string speaker_id;
  std::optional<std::string> text;
  Split split = Split::kTrain;

  bool operator==(const UtteranceRecord&) const = default;
};

/*
 Manifest files are JSON Lines: one object per line, blank lines ignored.

   {"clip_ref": "clips/a.wav", "label": "native", "speaker_id": "s01",
    "text": "optional transcript", "split": "train"}

 clip_ref     required string, unique within the file; relative paths are
              resolved against the manifest's directory
 label        required, "native" or "non-native"
 speaker_id   required string
 text         optional string or null
 split        required, "train", "validation" or "test"
*/
std::vector<UtteranceRecord> parse_manifest(std::istream& in);
std::vector<UtteranceRecord> load_manifest(const std::filesystem::path& path);

void write_manifest(std::ostream& out, const std::vector<UtteranceRecord>& records);
void write_manifest(const std::filesystem::path& path, const std::vector<UtteranceRecord>& records);

// Throws InputError naming the first speaker that appears in two splits.
void check_speaker_disjoint(const std::vector<UtteranceRecord>& records);

std::vector<UtteranceRecord> filter_split(const std::vector<UtteranceRecord>& records, Split split);

std::filesystem::path resolve_clip(const UtteranceRecord& record, const std::filesystem::path& base_dir);

}  // namespace speechcoach

#endif  // SPEECHCOACH_MANIFEST_HPP_
