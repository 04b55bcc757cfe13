// Copyright 2026 The estrain Authors
// SPDX-License-Identifier: Apache-2.0

#include "estrain/rng.hpp"

#include "estrain/error.hpp"

namespace estrain {

const char* errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::input: return "input";
    case Errc::numeric: return "numeric";
    case Errc::config: return "config";
    case Errc::corruption: return "corruption";
    case Errc::state: return "state";
    case Errc::format: return "format";
    case Errc::version: return "version";
    case Errc::constraint: return "constraint";
    case Errc::progress: return "progress";
    case Errc::usage: return "usage";
  }
  return "unknown";
}

std::uint64_t derive_seed(std::uint64_t seed, StreamTag tag, std::uint64_t index) noexcept {
  const std::uint64_t base = splitmix64_next(Rng64{seed ^ static_cast<std::uint64_t>(tag)}).value;
  return splitmix64_next(Rng64{base + index}).value;
}

}  // namespace estrain
