// Copyright 2026 The estrain Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "estrain/comm.hpp"
#include "estrain/datapipe.hpp"
#include "estrain/model.hpp"
#include "estrain/reduce.hpp"

namespace estrain {

struct PlanConfig;
struct DevicePool;

/// D0 fixed-DoP, D1 elasticity, D2 heterogeneity. D1 implies D0.
struct DeterminismMode {
  bool d0 = true;
  bool d1 = false;
  bool d2 = false;

  /// Accepts "d0", "d1", "d1d2", "d0d2".
  static DeterminismMode parse(const std::string& text);
  std::string to_string() const;
  void validate() const;

  friend bool operator==(const DeterminismMode&, const DeterminismMode&) = default;
};

/// Job-level constants shared by every EST of a training job.
struct JobSpec {
  std::uint64_t seed = 1;
  std::uint32_t max_p = 4;
  std::uint32_t micro_batch = 8;
  std::uint32_t dataset_size = 1024;
  double lr = 0.05;
  double momentum = 0.9;
  std::uint32_t bucket_cap = 64;
  double dropout = 0.5;
  double jitter = 0.01;
  bool shuffle = true;
  std::uint32_t prefetch_depth = 2;

  PipeConfig pipe_config() const;
  void validate() const;

  friend bool operator==(const JobSpec&, const JobSpec&) = default;
};

/// One executor of a layout. threads == 0 means "split evenly".
struct ExecutorSpec {
  std::string device_kind;
  std::uint32_t threads = 0;

  friend bool operator==(const ExecutorSpec&, const ExecutorSpec&) = default;
};

using Layout = std::vector<ExecutorSpec>;

struct ExecutorState {
  std::string device_kind;
  KernelProfile kernel_profile;
  std::vector<std::uint32_t> assigned_ests;  // ascending virtual rank
  ToyModel model;
  OptState opt;

  friend bool operator==(const ExecutorState&, const ExecutorState&) = default;
};

struct TrainingState {
  JobSpec job;
  DeterminismMode determinism;
  std::vector<EstContext> ests;  // indexed by virtual rank
  std::vector<ExecutorState> executors;
  BucketMap bucket_map;
  bool bucket_rebuild_pending = true;
  QueueBuffer queue_buffer;
  std::uint64_t global_step = 0;
  std::uint64_t epoch = 0;

  friend bool operator==(const TrainingState&, const TrainingState&) = default;
};

/// Contiguous rank assignment: executor k receives the next `threads[k]`
/// ranks, or ceil(max_p / E) ranks when no thread counts are given.
/// Executors left without ranks get an empty list.
std::vector<std::vector<std::uint32_t>> assign_ranks(const Layout& layout, std::uint32_t max_p);

/// Executors for `layout`, each holding a replica of model/opt and its
/// contiguous share of ranks.
std::vector<ExecutorState> place_executors(const Layout& layout, std::uint32_t max_p, const ToyModel& model,
                                           const OptState& opt);

TrainingState init_training(const JobSpec& job, DeterminismMode mode, const Layout& layout);

/// Forward kernel variant an executor runs under the job's determinism mode.
ReduceVariant effective_variant(const ExecutorState& ex, DeterminismMode mode);

/// Device-memory bytes one executor would hold; see memory_model.hpp.
struct ExecutorMemory {
  std::uint64_t resident_bytes = 0;
  std::uint64_t peak_bytes = 0;
};

struct MinibatchResult {
  std::vector<double> losses;  // by virtual rank
  std::vector<ExecutorMemory> memory;
};

/// One synchronous mini-batch over `global_batch` (max_p * micro rows in
/// rank order). Each executor runs its ESTs one at a time in ascending
/// rank, parks gradients of all but its last EST in pending_grads, then a
/// single all-reduce and a single optimizer step are applied and mirrored
/// to every executor.
MinibatchResult run_minibatch(TrainingState& ts, std::span<const Sample> global_batch);

/// Pulls the next mini-batch for every EST from `loader` and runs it.
MinibatchResult train_step(TrainingState& ts, DataLoader& loader);

/// Builds a loader positioned at the state's progress (restoring any queued
/// worker states).
DataLoader make_loader(const TrainingState& ts, std::shared_ptr<const Dataset> data, std::uint32_t workers);

/// True when every executor holds bitwise-identical model and optimizer state.
bool executors_agree(const TrainingState& ts);

/// Executor list a plan maps to: nums[i] GPUs of pool type i, each with
/// executors[i] executors running threads[i] ESTs.
Layout layout_from_plan(const PlanConfig& plan, const DevicePool& pool);

/// checkpoint_save followed by checkpoint_restore onto the plan's layout.
TrainingState reconfigure(const TrainingState& ts, const PlanConfig& plan, const DevicePool& pool);

}  // namespace estrain
