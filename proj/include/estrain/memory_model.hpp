// Copyright 2026 The estrain Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

#include "estrain/engine.hpp"

namespace estrain {

/// Device-memory accounting for hosting several logical workers on one GPU.
/// ESTs share one executor (one context, one model/optimizer replica) and
/// run one at a time; packed workers each keep a full replica and their
/// own context alive concurrently.
struct MemoryModel {
  std::uint64_t context_bytes = 8192;  // per-process runtime context
  std::uint64_t capacity_bytes = 0;    // device memory; 0 = 8 single workers

  /// Peak device bytes of one executor hosting `threads` ESTs, measured by
  /// running one mini-batch through the engine.
  std::uint64_t est_peak(const JobSpec& job, std::uint32_t threads) const;

  /// Peak device bytes of `workers` packed workers.
  std::uint64_t packing_peak(const JobSpec& job, std::uint32_t workers) const;

  std::uint64_t capacity(const JobSpec& job) const;
};

}  // namespace estrain
