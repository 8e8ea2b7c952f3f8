// Copyright 2026 The aplclock Authors
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

#ifndef APLCLOCK_ERRORS_HPP
#define APLCLOCK_ERRORS_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace aplclock {

struct InvalidArgument : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Raised when a partial projection samples no ions, so no population estimate exists.
struct EmptySampleError : std::runtime_error {
    EmptySampleError() : std::runtime_error("partial projection sampled zero ions") {
    }
};

/// Raised by the Allan estimator when a requested averaging time needs more data than is available.
struct InsufficientDataError : std::runtime_error {
    InsufficientDataError(const std::string &what, double max_usable_tau)
        : std::runtime_error(what + " (maximum usable tau = " + std::to_string(max_usable_tau) + " s)"),
          max_usable_tau(max_usable_tau) {
    }
    double max_usable_tau;
};

struct FitFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Bad configuration key, value or file. `line` is 0 when not tied to a line.
struct ConfigError : std::runtime_error {
    ConfigError(const std::string &what, std::size_t line = 0)
        : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what), line(line) {
    }
    std::size_t line;
};

struct ParseError : std::runtime_error {
    ParseError(const std::string &what, std::size_t line)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line(line) {
    }
    std::size_t line;
};

}  // namespace aplclock

#endif
