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

#ifndef SPEECHCOACH_TYPES_HPP_
#define SPEECHCOACH_TYPES_HPP_

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <string_view>

namespace speechcoach {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

// Class index 0 is native; ties resolve to it.
enum class Label : int { kNative = 0, kNonNative = 1 };

inline constexpr int kNumClasses = 2;

std::string_view to_string(Label label);
// Throws InputError for anything other than "native" / "non-native".
Label parse_label(std::string_view text);

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Bad caller-supplied data: malformed files, wrong shapes, failed preconditions.
class InputError : public Error {
 public:
  explicit InputError(const std::string& what) : Error(what) {}
};

// Missing or unusable model / encoder checkpoint.
class ModelError : public Error {
 public:
  explicit ModelError(const std::string& what) : Error(what) {}
};

}  // namespace speechcoach

#endif  // SPEECHCOACH_TYPES_HPP_
