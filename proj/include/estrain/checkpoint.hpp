// Copyright 2026 The estrain Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "estrain/engine.hpp"

namespace estrain {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Serialized size of one EstContext record.
inline constexpr std::size_t kEstContextBytes = 4 + 8 + 8 + 8 + 8;

/// Layout (all little-endian):
///   "ESCK" | u32 version
///   params    : u32 n, n x f64
///   optstate  : f64 lr, f64 momentum, u32 n, n x f64
///   flags     : u8 d0, u8 d1, u8 d2, u64 seed, u32 max_p, u32 micro_batch,
///               u32 dataset_size, u32 bucket_cap, u32 prefetch_depth,
///               u8 shuffle, f64 dropout, f64 jitter
///   bucket map: (D1 only) u32 capacity, u32 nbuckets, per bucket u32 len + len x u32
///   ests      : u32 n, per EST u32 rank, u64 dropout rng, f64 running mean,
///               u64 update count, u64 mini-batch index
///   queue     : u32 prefetch_depth, u32 total_p, u32 n, per state u32 est,
///               u32 slot, u64 rng, u64 mini-batch index
///   counters  : u64 global_step, u64 epoch
/// Only one copy of the model and optimizer is stored.
std::vector<std::uint8_t> checkpoint_save(const TrainingState& ts);

/// Rebuilds a state onto `layout`. Every executor gets a full replica. Under
/// D1 the stored bucket map is reinstated and bucket rebuilding stays off;
/// otherwise the map restarts from the static order and is rebuilt after
/// the first mini-batch, as a fresh communication world would.
TrainingState checkpoint_restore(std::span<const std::uint8_t> bytes, const Layout& layout);

}  // namespace estrain
