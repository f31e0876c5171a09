// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace lrc {

/// invalid arguments, shapes, or configuration; CLI exit code 2
class ArgumentError : public std::invalid_argument {
  public:
    explicit ArgumentError(const std::string& what) : std::invalid_argument(what) {}
};

/// numerical failure (non-convergence, degeneracy); CLI exit code 3
class NumericError : public std::runtime_error {
  public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

/// store or file-system failure; CLI exit code 4
class IoError : public std::runtime_error {
  public:
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace lrc
