// Copyright 2026 The bqkd Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace bqkd {

/// Down-conversion process. Type-0 and type-I share one description (pairs
/// in a common polarization); type-II pairs are split by polarization.
enum class ProcessType { type0, type2 };

inline const char* to_string(ProcessType p) { return p == ProcessType::type0 ? "type-0" : "type-II"; }

/// Numerical breakdown (ill-conditioned determinant, divergent series, fit failure).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid user input (configuration values, files).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-fatal diagnostics collected alongside a result.
using Warnings = std::vector<std::string>;

}  // namespace bqkd
