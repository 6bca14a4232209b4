// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace forge {

// Validation errors map to CLI exit code 2, everything else to 1.
enum class ErrorKind { runtime, validation };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(const std::string& what) {
  throw Error(ErrorKind::runtime, what);
}

[[noreturn]] inline void invalid(const std::string& what) {
  throw Error(ErrorKind::validation, what);
}

}  // namespace forge
