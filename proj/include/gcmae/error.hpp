// Copyright (c) 2026, gcmae contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace gcmae {

/// Base error. The CLI maps each subclass onto an exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input files, inconsistent datasets, bad checkpoints.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration values or inconsistent mode/weight combinations.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Tensor shape incompatibility.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values, empty reductions and similar numeric failures.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace gcmae
