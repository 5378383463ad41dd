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

#ifndef SPEECHCOACH_SERIALIZE_HPP_
#define SPEECHCOACH_SERIALIZE_HPP_

#include "speechcoach/types.hpp"

#include <json.hpp>

namespace speechcoach {

// {"rows": r, "cols": c, "data": [row-major values]}
nlohmann::json matrix_to_json(const Matrix& m);
// Throws ModelError on malformed or non-finite content.
Matrix matrix_from_json(const nlohmann::json& j);

}  // namespace speechcoach

#endif  // SPEECHCOACH_SERIALIZE_HPP_
