// Copyright 2026 The estrain Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "estrain/engine.hpp"
#include "estrain/runlog.hpp"

namespace estrain {

/// A stretch of training on one layout. Consecutive stages are joined by a
/// checkpoint save and a restore onto the next layout.
struct Stage {
  std::uint64_t steps = 0;
  Layout layout;
  std::uint32_t workers = 2;  // data-loader workers
};

struct RunConfig {
  JobSpec job;
  DeterminismMode mode{true, true, true};
  std::vector<Stage> stages;
  std::uint32_t dump_every = 0;  // full parameter dump every k steps; 0 = never

  std::uint64_t total_steps() const;
  void validate() const;
};

struct RunOutput {
  RunLog log;
  std::vector<std::uint8_t> checkpoint;  // state after the last step
  TrainingState state;
};

RunOutput run_training(const RunConfig& config);

}  // namespace estrain
