// Copyright 2026 The estrain Authors
// SPDX-License-Identifier: Apache-2.0

#include "estrain/comm.hpp"

#include <algorithm>
#include <string>

#include "estrain/error.hpp"
#include "estrain/rng.hpp"

namespace estrain {

std::size_t BucketMap::param_count() const noexcept {
  std::size_t n = 0;
  for (const auto& b : buckets) n += b.size();
  return n;
}

bool BucketMap::is_partition() const {
  const std::size_t n = param_count();
  std::vector<bool> seen(n, false);
  for (const auto& b : buckets) {
    for (std::uint32_t idx : b) {
      if (idx >= n || seen[idx]) return false;
      seen[idx] = true;
    }
  }
  return true;
}

namespace {

BucketMap pack(std::span<const std::uint32_t> order, std::uint32_t capacity) {
  if (capacity < 1) throw Error(Errc::config, "bucket capacity must be >= 1");
  BucketMap bm;
  bm.capacity = capacity;
  for (std::uint32_t idx : order) {
    if (bm.buckets.empty() || bm.buckets.back().size() >= capacity) bm.buckets.emplace_back();
    bm.buckets.back().push_back(idx);
  }
  return bm;
}

}  // namespace

BucketMap build_buckets_initial(std::size_t param_count, std::uint32_t capacity) {
  std::vector<std::uint32_t> order(param_count);
  for (std::size_t k = 0; k < param_count; ++k) {
    order[k] = static_cast<std::uint32_t>(param_count - 1 - k);
  }
  return pack(order, capacity);
}

BucketMap rebuild_buckets_first_minibatch(std::span<const std::uint32_t> arrival_perm,
                                          std::uint32_t capacity) {
  std::vector<bool> seen(arrival_perm.size(), false);
  for (std::uint32_t idx : arrival_perm) {
    if (idx >= arrival_perm.size() || seen[idx]) {
      throw Error(Errc::input, "arrival order is not a permutation of parameter indices");
    }
    seen[idx] = true;
  }
  return pack(arrival_perm, capacity);
}

std::vector<std::uint32_t> arrival_permutation(std::size_t param_count, std::uint64_t seed,
                                               std::span<const std::uint32_t> world_layout) {
  std::uint64_t key = derive_seed(seed, StreamTag::arrival, world_layout.size());
  for (std::uint32_t threads : world_layout) {
    key = splitmix64_next(Rng64{key ^ threads}).value;
  }
  // Start from the static reverse order so the identity shuffle reproduces
  // the initial map.
  std::vector<std::uint32_t> perm(param_count);
  for (std::size_t k = 0; k < param_count; ++k) perm[k] = static_cast<std::uint32_t>(param_count - 1 - k);
  SplitMix rng(key);
  for (std::size_t i = param_count; i > 1; --i) {
    const std::size_t j = rng.next() % i;
    std::swap(perm[i - 1], perm[j]);
  }
  return perm;
}

std::vector<double> allreduce(std::span<const std::vector<double>> replicas, const BucketMap& bm,
                              ReduceVariant variant) {
  if (replicas.empty()) throw Error(Errc::input, "allreduce needs at least one replica");
  const std::size_t n = replicas.front().size();
  for (const auto& r : replicas) {
    if (r.size() != n) throw Error(Errc::input, "replica gradient lengths differ");
  }
  if (bm.param_count() != n) {
    throw Error(Errc::input, "bucket map covers " + std::to_string(bm.param_count()) +
                                 " parameters, replicas have " + std::to_string(n));
  }
  const std::size_t ranks = replicas.size();
  const double denom = static_cast<double>(ranks);
  std::vector<double> out(n, 0.0);
  std::vector<double> terms(ranks);
  for (const auto& bucket : bm.buckets) {
    const std::size_t len = bucket.size();
    for (std::size_t pos = 0; pos < len; ++pos) {
      const std::uint32_t param = bucket[pos];
      std::size_t start = 0;
      if (!variant.is_sequential()) {
        const std::size_t chunk = pos * ranks / len;
        start = (chunk + 1) % ranks;
      }
      for (std::size_t k = 0; k < ranks; ++k) terms[k] = replicas[(start + k) % ranks][param];
      out[param] = reduce_sum(terms, variant) / denom;
    }
  }
  return out;
}

}  // namespace estrain
