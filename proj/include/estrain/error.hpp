// Copyright 2026 The estrain Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace estrain {

enum class Errc {
  input,
  numeric,
  config,
  corruption,
  state,
  format,
  version,
  constraint,
  progress,
  usage,
};

const char* errc_name(Errc code) noexcept;

/// Base exception for every failure raised by the library. The code tells
/// callers (and the CLI's exit-code mapping) which contract was violated.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + " error: " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

/// Malformed serialized input; offset is the byte where decoding stopped.
class FormatError : public Error {
 public:
  FormatError(std::size_t offset, const std::string& what)
      : Error(Errc::format, what + " at offset " + std::to_string(offset)), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace estrain
