// Copyright 2026 The estrain Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "estrain/reduce.hpp"

namespace estrain {

/// Ordered partition of parameter indices into communication buckets.
struct BucketMap {
  std::uint32_t capacity = 1;
  std::vector<std::vector<std::uint32_t>> buckets;

  std::size_t param_count() const noexcept;
  /// True iff the buckets cover [0, param_count) exactly once each.
  bool is_partition() const;

  friend bool operator==(const BucketMap&, const BucketMap&) = default;
};

/// Static reverse-layer order: indices count-1 .. 0 packed greedily.
BucketMap build_buckets_initial(std::size_t param_count, std::uint32_t capacity);

/// Repacks buckets greedily in gradient arrival order.
BucketMap rebuild_buckets_first_minibatch(std::span<const std::uint32_t> arrival_perm,
                                          std::uint32_t capacity);

/// Order in which gradients "arrive" on a freshly built communication world.
/// This is a failure-mode model rather than a timing model: the order is a
/// seeded shuffle keyed on the world layout (threads per communicating
/// member), so a different layout after a restart yields a different order.
std::vector<std::uint32_t> arrival_permutation(std::size_t param_count, std::uint64_t seed,
                                               std::span<const std::uint32_t> world_layout);

/// Ring-modelled all-reduce returning the mean gradient. `replicas` are in
/// ascending virtual-rank order.
///
/// Sequential: every parameter's contributions are folded in ascending rank
/// order, so the bucket map cannot influence the bits.
/// Tree(f): each bucket is cut into one chunk per rank as a ring all-reduce
/// does, the fold for a chunk starts at the rank after the chunk index and
/// walks the ring, and the rotated contributions are combined with
/// reduce_sum(Tree(f)). A parameter's summation order therefore depends on
/// its position inside its bucket.
std::vector<double> allreduce(std::span<const std::vector<double>> replicas, const BucketMap& bm,
                              ReduceVariant variant);

/// The variant the training engine uses for gradient synchronization.
inline ReduceVariant ring_variant() { return ReduceVariant::tree(2); }

}  // namespace estrain
