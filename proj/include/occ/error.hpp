// Copyright 2026 The occsplat Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace occ {

/// Violated precondition or malformed argument (shape mismatch, bad config).
class ContractError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// Missing, truncated or malformed input data.
class DataError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// NaN or infinity where a finite value is required.
class NumericError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) {
        throw ContractError(msg);
    }
}

} // namespace occ
