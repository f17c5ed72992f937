// Copyright 2026 The memescope Authors.
// SPDX-License-Identifier: Apache-2.0

#ifndef MEMESCOPE_ERROR_H_
#define MEMESCOPE_ERROR_H_

#include <stdexcept>
#include <string>

namespace memescope {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad user input: malformed records, empty splits, invalid configs.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Operand shapes do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

// API misuse, e.g. backward() from a non-scalar.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Checkpoint is truncated, has the wrong magic/version, or a parameter shape
// disagrees with the stored config.
class LoadError : public Error {
 public:
  using Error::Error;
};

// A queried record id or keyword does not exist.
class NotFoundError : public Error {
 public:
  using Error::Error;
};

// An internal invariant failed at runtime.
class InvariantError : public Error {
 public:
  using Error::Error;
};

}  // namespace memescope

#endif  // MEMESCOPE_ERROR_H_
