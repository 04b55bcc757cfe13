// Copyright 2026 The estrain Authors
// SPDX-License-Identifier: Apache-2.0

#include "estrain/memory_model.hpp"

#include "estrain/error.hpp"

namespace estrain {

std::uint64_t MemoryModel::est_peak(const JobSpec& job, std::uint32_t threads) const {
  if (threads < 1) throw Error(Errc::config, "need at least one EST");
  JobSpec j = job;
  j.max_p = threads;
  j.dataset_size = std::max<std::uint32_t>(job.dataset_size, threads * job.micro_batch);
  TrainingState ts = init_training(j, DeterminismMode{true, true, false}, Layout{{"v100", threads}});
  const Dataset data = Dataset::synthetic(j.seed, j.dataset_size);
  std::vector<Sample> batch(data.rows.begin(), data.rows.begin() + threads * j.micro_batch);
  const MinibatchResult res = run_minibatch(ts, batch);
  return context_bytes + res.memory.at(0).peak_bytes;
}

std::uint64_t MemoryModel::packing_peak(const JobSpec& job, std::uint32_t workers) const {
  // A packed worker is a one-EST executor in its own process.
  return static_cast<std::uint64_t>(workers) * est_peak(job, 1);
}

std::uint64_t MemoryModel::capacity(const JobSpec& job) const {
  return capacity_bytes != 0 ? capacity_bytes : 8 * est_peak(job, 1);
}

}  // namespace estrain
