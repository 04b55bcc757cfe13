// Copyright 2026 The estrain Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "estrain/engine.hpp"
#include "estrain/planner.hpp"

namespace estrain {

// ---- inter-job scheduler ----

struct JobProposal {
  std::uint32_t job_id = 0;
  double speedup = 0.0;
  std::vector<std::uint32_t> demand;  // GPUs requested per pool type

  std::uint32_t gpus() const;
};

struct ScheduleResult {
  std::vector<std::size_t> approved;  // indices into the input, in approval order
  std::vector<std::size_t> skipped;   // popped without approval
  std::vector<std::uint32_t> remaining;
};

/// Scan order: speedup descending, GPU count descending, job_id ascending.
std::vector<std::size_t> schedule_order(std::span<const JobProposal> proposals);

/// Greedy approval in schedule_order. A proposal whose demand exceeds what is
/// left is dropped and the scan continues. With one_per_job, proposals of a
/// job that already got an approval are dropped too.
ScheduleResult schedule(std::span<const JobProposal> proposals, std::span<const std::uint32_t> available,
                        bool one_per_job = false);

// ---- simulator ----

enum class SimMode { yarn_cs, elastic_homo, elastic_heter };

SimMode parse_sim_mode(const std::string& text);  // "yarn", "homo", "heter"
std::string to_string(SimMode mode);

struct TraceJob {
  std::uint32_t job_id = 0;
  double arrival_s = 0.0;
  std::uint32_t min_p = 0;
  std::uint32_t max_p = 1;
  std::uint64_t total_minibatches = 1;
  std::string workload_key;
  DeterminismMode determinism;

  void validate() const;
};

/// A serving job takes `count` GPUs of one type at time_s and hands the
/// same GPUs back after duration_s.
struct PreemptionEvent {
  double time_s = 0.0;
  std::string device_type;
  std::uint32_t count = 0;
  double duration_s = 0.0;
};

struct SimParams {
  double round_s = 30.0;
  double restore_timeout_s = 300.0;
  double reconfig_cost_s = 10.0;
  std::uint32_t proposals_k = 3;
  double waste_threshold = 0.30;
};

struct ClusterSpec {
  DevicePool pool;
  std::map<std::string, WorkloadProfile> workloads;
  std::vector<PreemptionEvent> preemptions;
  SimParams params;

  void validate() const;
};

struct JobMetrics {
  std::uint32_t job_id = 0;
  double arrival_s = 0.0;
  double start_s = -1.0;
  double finish_s = -1.0;
  double jct_s = -1.0;
  std::uint32_t reconfigurations = 0;
  std::uint32_t preemptions = 0;
  std::uint32_t suspensions = 0;
  bool rejected = false;
};

struct TimelineSample {
  double time_s = 0.0;
  std::uint32_t gpus_allocated = 0;
};

/// kind: start, resume, reconfigure, preempt, restore, suspend, finish, reject.
struct SimEvent {
  double time_s = 0.0;
  std::uint32_t job_id = 0;
  std::string kind;
};

struct SimMetrics {
  std::vector<JobMetrics> jobs;  // trace order
  double mean_jct_s = 0.0;       // over completed jobs
  double makespan_s = 0.0;       // last finish minus first arrival
  double mean_allocated = 0.0;   // time-weighted over the makespan
  std::vector<TimelineSample> timeline;
  std::uint32_t preemptions = 0;
  std::uint32_t rejected = 0;
  std::vector<std::string> diagnostics;
  std::vector<SimEvent> events;

  std::string jobs_csv() const;
  std::string events_csv() const;
  std::string timeline_csv() const;
  std::string summary_csv() const;
};

/// Discrete-event simulation of the trace on the pool. Single-threaded and
/// a pure function of its inputs.
SimMetrics simulate(std::span<const TraceJob> trace, const ClusterSpec& cluster, SimMode mode);

}  // namespace estrain
