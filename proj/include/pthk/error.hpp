// Copyright 2026 The pthk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace pthk {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed segment layouts, tagged streams, or out-of-range indices.
class LayoutError : public Error {
 public:
  using Error::Error;
};

// Tensor shape or vector dimension mismatches.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Block pool exhaustion, invalid handles, lineage violations.
class CacheError : public Error {
 public:
  using Error::Error;
};

// Stage-machine misuse and invalid session inputs.
class EngineError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace pthk
