// Copyright 2026 The estrain Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace estrain {

struct DeviceType {
  std::string name;
  std::uint32_t count = 0;       // N_i
  std::uint32_t memory_mu = 1;   // capacity in memory units
  std::vector<double> interference = {1.0};  // I_i(m) for m = 1, 2, ...

  /// I_i(m); the last table entry extends to larger m.
  double interference_at(std::uint32_t executors) const;
};

struct DevicePool {
  std::vector<DeviceType> types;

  std::size_t size() const noexcept { return types.size(); }
  std::vector<std::uint32_t> counts() const;
  void validate() const;
};

struct WorkloadProfile {
  std::vector<double> capability;  // C_i, mini-batches per second, by pool type
  std::vector<double> historical;  // defaults used before any observation
  std::uint32_t mu_per_executor = 1;

  static WorkloadProfile from_history(std::vector<double> historical, std::uint32_t mu_per_executor = 1);
};

struct JobShape {
  std::uint32_t min_p = 0;
  std::uint32_t max_p = 1;
};

struct WasteResult {
  std::uint64_t cu_capacity = 0;
  double f_overload = 0.0;
  double waste = 0.0;
  double waste_norm = 0.0;  // percent of sum N_i * C_i
  double perf = 0.0;
};

/// Waste and estimated throughput of assigning A_i CUs per GPU to nums_i GPUs
/// of capability C_i:
///   CU_capacity = sum N_i A_i  (must be >= max_p)
///   f_overload  = max over used types of A_i / C_i
///   waste       = sum N_i (C_i - A_i / f) + (CU_capacity - max_p) / f
///   waste_norm  = 100 * waste / sum N_i C_i
///   perf        = sum N_i C_i - waste
WasteResult waste_model(std::span<const std::uint32_t> nums, std::span<const std::uint64_t> cus,
                        std::span<const double> capability, std::uint32_t max_p);

struct MultiExecutor {
  double capability = 0.0;  // MC_i = m * C_i * I_i(m)
  std::uint64_t cus = 0;    // MA_i = m * A_i
};

MultiExecutor multi_executor_adjust(std::uint32_t executors, double capability, double interference,
                                    std::uint32_t cus_per_executor, std::uint32_t max_executors);

struct PlanConfig {
  std::vector<std::uint32_t> nums;
  std::vector<std::uint32_t> executors;  // per GPU
  std::vector<std::uint32_t> threads;    // ESTs per executor
  std::uint64_t cu_capacity = 0;
  double f_overload = 0.0;
  double waste = 0.0;
  double waste_norm = 0.0;
  double perf = 0.0;

  std::uint32_t total_gpus() const;
  /// A_i: ESTs per GPU of type i.
  std::uint32_t cus_per_gpu(std::size_t type) const { return executors[type] * threads[type]; }

  friend bool operator==(const PlanConfig&, const PlanConfig&) = default;
};

struct PlanOptions {
  double waste_threshold = 0.30;
};

/// Largest executor count per GPU that fits the type's memory.
std::uint32_t max_executors(const DeviceType& type, const WorkloadProfile& profile);

/// Scores a <nums, executors, threads> triple; nullopt when it violates the
/// resource, shape or waste constraints.
std::optional<PlanConfig> evaluate_config(const DevicePool& pool, const WorkloadProfile& profile, JobShape shape,
                                          std::span<const std::uint32_t> nums,
                                          std::span<const std::uint32_t> executors,
                                          std::span<const std::uint32_t> threads, PlanOptions options = {});

/// Plan ordering: perf descending, then fewer GPUs, then lexicographic
/// nums, executors, threads.
bool plan_before(const PlanConfig& a, const PlanConfig& b);

/// Every feasible configuration over nums_i in [0, N_i], memory-feasible
/// executor counts and 1..max_p ESTs per GPU, sorted by plan_before.
/// The search is split across OpenMP threads.
std::vector<PlanConfig> enumerate_configs(const DevicePool& pool, const WorkloadProfile& profile, JobShape shape,
                                          PlanOptions options = {});
/// Single-threaded reference for enumerate_configs.
std::vector<PlanConfig> enumerate_configs_serial(const DevicePool& pool, const WorkloadProfile& profile,
                                                 JobShape shape, PlanOptions options = {});

/// Candidate generation from integer approximations floor/ceil(t * c_i) of
/// per-thread capabilities, t = k / c_max. Duplicated triples keep the
/// smallest waste.
std::vector<PlanConfig> enumerate_configs_fast(const DevicePool& pool, const WorkloadProfile& profile,
                                               JobShape shape, PlanOptions options = {});

std::optional<PlanConfig> best_config(const DevicePool& pool, const WorkloadProfile& profile, JobShape shape,
                                      PlanOptions options = {});

struct Proposal {
  PlanConfig config;
  double speedup_per_gpu = 0.0;
  std::uint32_t gpu_delta = 0;
  std::size_t device_type = 0;  // type of the added GPUs
};

struct ProposalSet {
  std::optional<PlanConfig> top1;
  std::vector<Proposal> proposals;
};

/// Memoizes best_config per (shape, per-type GPU bound) for one pool and
/// workload profile.
class PlanCache {
 public:
  PlanCache(DevicePool pool, WorkloadProfile profile, PlanOptions options = {});

  const std::optional<PlanConfig>& best(JobShape shape, std::span<const std::uint32_t> bound);
  const DevicePool& pool() const noexcept { return pool_; }
  const WorkloadProfile& profile() const noexcept { return profile_; }

 private:
  DevicePool pool_;
  WorkloadProfile profile_;
  PlanOptions options_;
  std::map<std::vector<std::uint32_t>, std::optional<PlanConfig>> memo_;
};

struct ProposeOptions {
  std::uint32_t k = 3;
  bool homogeneous_only = false;
  PlanOptions plan;
  PlanCache* cache = nullptr;  // must match pool/profile/plan when set
};

/// Top-1 plan on the granted GPUs plus up to K scale-out proposals, each
/// adding one GPU of a type that still has free units. A job below
/// max(min_p, 1) GPUs proposes to start on that many GPUs of one type.
/// When one more GPU of a type cannot raise the estimate (for example the
/// third GPU of a max_p = 4 job) the proposal grows to the fewest GPUs of
/// that type that do, and speedup is normalized per added GPU.
/// Proposals with non-positive speedup are dropped; the rest are sorted by
/// speedup descending.
ProposalSet propose(std::span<const std::uint32_t> grant, std::span<const std::uint32_t> free_gpus,
                    const DevicePool& pool, const WorkloadProfile& profile, JobShape shape,
                    ProposeOptions options = {});

struct RuntimeObservation {
  std::size_t device_type = 0;
  double minibatches_per_second = 0.0;
};

/// Applies each observation as C_i <- (C_i + v) / 2.
WorkloadProfile update_profile(const WorkloadProfile& profile, std::span<const RuntimeObservation> stats);

enum class FallbackDecision { keep, revert };

struct MeasuredPerf {
  double rate = 0.0;
  std::uint32_t steps = 0;
};

struct FallbackOptions {
  double slack = 0.05;
  std::uint32_t warmup_steps = 10;
};

/// Revert iff the new measurement is below prev * (1 - slack). Measurements
/// shorter than the warmup window are not acted on.
FallbackDecision fallback_on_slowdown(MeasuredPerf prev, MeasuredPerf current, FallbackOptions options = {});

}  // namespace estrain
