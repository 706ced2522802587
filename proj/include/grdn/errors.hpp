// grdn/errors.hpp

// Copyright 2026  The grdn authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace grdn {

/// Bad configuration: inconsistent dimensions, invalid option values,
/// unusable module parameters. CLI exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// API misuse: calling an operation whose preconditions do not hold
/// (missing labels, unfitted statistics, non-binary RBM input). Exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed input file. Carries the byte offset of the first offending
/// byte. Exit code 3.
struct ParseError : std::runtime_error {
  std::size_t offset;
  ParseError(const std::string &what, std::size_t off)
      : std::runtime_error(what + " (at byte offset " + std::to_string(off) +
                           ")"),
        offset(off) {}
};

/// Well-formed but unusable data: provenance hash mismatches, inconsistent
/// artifact pairs. Exit code 3.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Numerical failure: non-finite loss or gradient, failed factorization.
/// Exit code 4.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace grdn
