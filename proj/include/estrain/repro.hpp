// Copyright 2026 The estrain Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "estrain/runlog.hpp"
#include "estrain/training.hpp"

namespace estrain {

/// Two run configurations that should train bitwise-identical models.
///   S1 rerun on one device, S2 rerun on a fixed multi-GPU layout,
///   S3 different device kinds, S4 different executor counts with restarts,
///   S5 both at once.
struct ReproScenario {
  std::string level;
  std::string description;
  RunConfig a;
  RunConfig b;
};

struct ScenarioResult {
  std::string level;
  bool guaranteed = false;
  bool equal = false;
  std::optional<Divergence> divergence;
};

/// Levels a determinism mode promises: D0 {S1,S2}, D0+D2 {S1,S2,S3},
/// D1 {S1,S2,S4}, D1+D2 all five.
bool mode_guarantees(DeterminismMode mode, const std::string& level);

/// The shipped ladder for `job` (max_p must be 4) over `steps` mini-batches.
std::vector<ReproScenario> default_matrix(const JobSpec& job, std::uint64_t steps);

/// Runs both sides of every scenario under `mode` (overriding the configs'
/// own mode) and compares logs and final parameters bit for bit.
ScenarioResult run_scenario(const ReproScenario& scenario, DeterminismMode mode);
std::vector<ScenarioResult> run_matrix(std::span<const ReproScenario> scenarios, DeterminismMode mode);

}  // namespace estrain
