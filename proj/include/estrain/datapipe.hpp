// Copyright 2026 The estrain Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "estrain/model.hpp"
#include "estrain/rng.hpp"

namespace estrain {

struct Dataset {
  std::vector<Sample> rows;

  /// x ~ U(-1, 1)^8, y = sin(a . x) + small noise, all from `seed`.
  static Dataset synthetic(std::uint64_t seed, std::uint32_t size);
};

struct SamplePlan {
  std::uint64_t seed = 0;
  std::uint64_t epoch = 0;
  std::uint32_t dataset_size = 0;
  std::uint32_t total_p = 1;
  std::uint32_t micro_batch = 1;
  bool shuffle = true;
};

/// Mini-batches per epoch after dropping the ragged tail.
std::uint64_t steps_per_epoch(std::uint32_t dataset_size, std::uint32_t total_p, std::uint32_t micro_batch);

/// Per-EST index lists for one epoch. The shuffle is Fisher-Yates over
/// [0, n) driven by splitmix64(seed ^ epoch); position t goes to EST
/// t mod total_p. Positions past the last whole mini-batch are dropped.
std::vector<std::vector<std::uint32_t>> epoch_indices(const SamplePlan& plan);

/// Recorded state a data worker needs to build the micro-batch of one EST
/// for one mini-batch.
struct WorkerState {
  std::uint32_t est_index = 0;
  std::uint32_t worker_slot = 0;
  Rng64 rng;
  std::uint64_t minibatch_idx = 0;

  friend bool operator==(const WorkerState&, const WorkerState&) = default;
};

/// States of prefetched but unconsumed micro-batches, ordered by
/// (minibatch_idx, est_index).
class QueueBuffer {
 public:
  QueueBuffer() = default;
  QueueBuffer(std::uint32_t prefetch_depth, std::uint32_t total_p)
      : prefetch_depth_(prefetch_depth), total_p_(total_p) {}

  /// Appends a state; keys must be strictly increasing and the length stays
  /// within prefetch_depth * total_p.
  void push(const WorkerState& ws);
  /// Removes and returns the state for (mb, est), if queued.
  std::optional<WorkerState> take(std::uint64_t mb, std::uint32_t est);
  bool contains(std::uint64_t mb, std::uint32_t est) const;

  /// States for mini-batches after `consumed_through` (-1 when nothing has
  /// been consumed yet).
  std::vector<WorkerState> drain_for_checkpoint(std::int64_t consumed_through) const;

  const std::deque<WorkerState>& states() const noexcept { return states_; }
  std::uint32_t prefetch_depth() const noexcept { return prefetch_depth_; }
  std::uint32_t total_p() const noexcept { return total_p_; }
  std::size_t size() const noexcept { return states_.size(); }
  bool empty() const noexcept { return states_.empty(); }

  friend bool operator==(const QueueBuffer&, const QueueBuffer&) = default;

 private:
  std::uint32_t prefetch_depth_ = 2;
  std::uint32_t total_p_ = 1;
  std::deque<WorkerState> states_;
};

struct PipeConfig {
  std::uint64_t seed = 0;
  std::uint32_t dataset_size = 0;
  std::uint32_t total_p = 1;
  std::uint32_t micro_batch = 1;
  bool shuffle = true;
  double jitter = 0.01;  // 0 disables augmentation
  std::uint32_t prefetch_depth = 2;
};

/// Fresh worker state for (mb, est); its RNG is keyed on the job seed, the
/// mini-batch index and the EST only.
WorkerState initial_worker_state(const PipeConfig& cfg, std::uint64_t mb, std::uint32_t est);

/// Shared pool of `workers` data-worker slots serving every EST of a job.
/// Not part of the checkpoint: it only caches materialized batches.
class DataLoader {
 public:
  DataLoader(std::shared_ptr<const Dataset> data, PipeConfig cfg, std::uint32_t workers);

  /// Tops the queue up to prefetch_depth mini-batches starting at
  /// `next_mb` and materializes the new states on the worker slots.
  void prefetch(QueueBuffer& qb, std::uint64_t next_mb);

  /// Micro-batch for (mb, est). Consumes and retires the queued state.
  /// Requests must follow training progress per EST.
  MicroBatch next_batch(QueueBuffer& qb, std::uint64_t mb, std::uint32_t est);

  /// Next mini-batch index this loader expects for `est`.
  std::uint64_t cursor(std::uint32_t est) const { return cursor_.at(est); }
  void set_cursor(std::uint64_t mb);

  /// Builds micro-batches for `states`, one OpenMP thread per worker slot.
  std::vector<MicroBatch> materialize(std::span<const WorkerState> states);
  /// Single-threaded reference for materialize().
  std::vector<MicroBatch> materialize_serial(std::span<const WorkerState> states);

  const PipeConfig& config() const noexcept { return cfg_; }
  std::uint32_t workers() const noexcept { return workers_; }

 private:
  const std::vector<std::vector<std::uint32_t>>& indices_for_epoch(std::uint64_t epoch);
  MicroBatch build(const WorkerState& ws, const std::vector<std::vector<std::uint32_t>>& lists) const;

  std::shared_ptr<const Dataset> data_;
  PipeConfig cfg_;
  std::uint32_t workers_;
  std::uint64_t spe_;
  std::uint64_t dispatched_ = 0;
  std::vector<std::uint64_t> cursor_;
  std::map<std::uint64_t, std::vector<std::vector<std::uint32_t>>> epochs_;
  std::map<std::pair<std::uint64_t, std::uint32_t>, MicroBatch> ready_;
};

}  // namespace estrain
