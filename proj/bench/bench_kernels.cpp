// Copyright 2026 The estrain Authors
// SPDX-License-Identifier: Apache-2.0

// Serial vs OpenMP timings for the planner search and batch materialization.

#include <chrono>
#include <cstdio>
#include <functional>
#include <memory>

#include "estrain/datapipe.hpp"
#include "estrain/planner.hpp"

using namespace estrain;

namespace {

double best_of(int reps, const std::function<void()>& f) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    const std::chrono::duration<double, std::milli> dt = std::chrono::steady_clock::now() - t0;
    best = std::min(best, dt.count());
  }
  return best;
}

}  // namespace

int main() {
  DevicePool pool;
  pool.types = {{"v100", 4, 2, {1.0, 0.75}}, {"p100", 4, 2, {1.0, 0.8}}, {"t4", 4, 1, {1.0}}};
  WorkloadProfile profile = WorkloadProfile::from_history({2.45, 1.6, 1.0});
  const JobShape shape{0, 16};
  std::size_t n_serial = 0, n_par = 0;
  const double es = best_of(3, [&] { n_serial = enumerate_configs_serial(pool, profile, shape).size(); });
  const double ep = best_of(3, [&] { n_par = enumerate_configs(pool, profile, shape).size(); });
  std::printf("enumerate   serial %8.2f ms  openmp %8.2f ms  configs %zu/%zu\n", es, ep, n_serial, n_par);

  auto data = std::make_shared<const Dataset>(Dataset::synthetic(7, 4096));
  PipeConfig cfg;
  cfg.seed = 7;
  cfg.dataset_size = 4096;
  cfg.total_p = 8;
  cfg.micro_batch = 64;
  std::vector<WorkerState> states;
  for (std::uint64_t mb = 0; mb < 8; ++mb) {
    for (std::uint32_t e = 0; e < cfg.total_p; ++e) states.push_back(initial_worker_state(cfg, mb, e));
  }
  DataLoader serial(data, cfg, 1);
  DataLoader par(data, cfg, 8);
  const double ms = best_of(5, [&] { serial.materialize_serial(states); });
  const double mp = best_of(5, [&] { par.materialize(states); });
  std::printf("materialize serial %8.2f ms  openmp %8.2f ms  batches %zu\n", ms, mp, states.size());
  return 0;
}
