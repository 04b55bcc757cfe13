// Copyright 2026 The estrain Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "estrain/cluster.hpp"
#include "estrain/repro.hpp"
#include "estrain/training.hpp"

namespace estrain {

/// Reads a whole file; a missing file is an input error.
std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view text);

/// Pool document:
///   {"device_types": [{"name": "v100", "count": 4, "memory_mu": 2,
///                      "interference": [1.0, 0.75],
///                      "capability": {"resnet": 2.45}}, ...],
///    "workloads": {"resnet": {"mu_per_executor": 1}},
///    "preemptions": [{"time_s": 600, "device_type": "v100", "count": 2, "duration_s": 120}],
///    "scheduler": {"round_s": 30, "restore_timeout_s": 300, "reconfig_cost_s": 10,
///                  "proposals_k": 3, "waste_threshold": 0.3}}
/// Every workload named in a capability table gets a profile; types that do
/// not list a workload have capability 0 for it.
ClusterSpec parse_cluster(std::string_view json_text);

/// Profile document: {"workload": "resnet", "capability": {"v100": 2.45},
/// "mu_per_executor": 1}. Explicit capabilities override the pool's table
/// for the named workload.
WorkloadProfile parse_profile(std::string_view json_text, const ClusterSpec& cluster);

/// CSV with header job_id,arrival_s,minP,maxP,total_minibatches,workload_key,determinism.
std::vector<TraceJob> parse_trace(std::string_view csv_text);

/// Training document: {"job": {...}, "determinism": "d1d2", "dump_every": 0,
/// "stages": [{"steps": 100, "workers": 2, "layout": [{"device": "v100", "threads": 2, "count": 2}]}]}.
/// "count" repeats an executor entry.
RunConfig parse_run_config(std::string_view json_text);

/// Matrix document: {"job": {...}, "steps": 200, "scenarios": [{"level": "S4",
/// "description": "...", "a": {"stages": [...]}, "b": {"stages": [...]}}]}.
/// Without "scenarios" the shipped ladder is used.
std::vector<ReproScenario> parse_matrix(std::string_view json_text);

}  // namespace estrain
