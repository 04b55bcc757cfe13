// Copyright 2026 The estrain Authors
// SPDX-License-Identifier: Apache-2.0

#include "estrain/repro.hpp"

#include <bit>

#include "estrain/error.hpp"

namespace estrain {

bool mode_guarantees(DeterminismMode mode, const std::string& level) {
  if (level == "S1" || level == "S2") return mode.d0;
  if (level == "S3") return mode.d2;
  if (level == "S4") return mode.d1;
  if (level == "S5") return mode.d1 && mode.d2;
  throw Error(Errc::config, "unknown reproducibility level '" + level + "'");
}

namespace {

Layout uniform(const std::string& kind, std::uint32_t executors, std::uint32_t threads) {
  return Layout(executors, ExecutorSpec{kind, threads});
}

RunConfig single(const JobSpec& job, std::uint64_t steps, Layout layout) {
  RunConfig c;
  c.job = job;
  c.stages.push_back({steps, std::move(layout), 2});
  return c;
}

}  // namespace

std::vector<ReproScenario> default_matrix(const JobSpec& job, std::uint64_t steps) {
  if (job.max_p != 4) throw Error(Errc::config, "the shipped matrix is laid out for max_p = 4");
  const std::uint64_t s1 = steps * 7 / 20;
  const std::uint64_t s2 = steps * 7 / 20;
  const std::uint64_t s3 = steps - s1 - s2;
  std::vector<ReproScenario> m;

  m.push_back({"S1", "same single-GPU config twice", single(job, steps, uniform("v100", 1, 4)),
               single(job, steps, uniform("v100", 1, 4))});

  ReproScenario s2s{"S2", "same 4-GPU layout twice, different loader worker counts",
                    single(job, steps, uniform("v100", 4, 1)), single(job, steps, uniform("v100", 4, 1))};
  s2s.b.stages[0].workers = 4;
  m.push_back(std::move(s2s));

  m.push_back({"S3", "4 GPUs of one kind vs 4 GPUs of another", single(job, steps, uniform("v100", 4, 1)),
               single(job, steps, uniform("t4", 4, 1))});

  ReproScenario s4{"S4", "4 executors vs 4 -> 2 -> 1 executors with restarts",
                   single(job, steps, uniform("v100", 4, 1)), {}};
  s4.b.job = job;
  s4.b.stages = {{s1, uniform("v100", 4, 1), 2}, {s2, uniform("v100", 2, 2), 3}, {s3, uniform("v100", 1, 4), 1}};
  m.push_back(std::move(s4));

  ReproScenario s5{"S5", "4 v100 vs restarts across counts and mixed kinds",
                   single(job, steps, uniform("v100", 4, 1)), {}};
  s5.b.job = job;
  s5.b.stages = {{s1, uniform("p100", 2, 2), 2},
                 {s2, Layout{{"v100", 2}, {"t4", 1}, {"p100", 1}}, 4},
                 {s3, uniform("a100", 1, 4), 1}};
  m.push_back(std::move(s5));
  return m;
}

ScenarioResult run_scenario(const ReproScenario& scenario, DeterminismMode mode) {
  RunConfig a = scenario.a;
  RunConfig b = scenario.b;
  a.mode = mode;
  b.mode = mode;
  const RunOutput ra = run_training(a);
  const RunOutput rb = run_training(b);
  ScenarioResult r;
  r.level = scenario.level;
  r.guaranteed = mode_guarantees(mode, scenario.level);
  r.divergence = first_divergence(ra.log, rb.log);
  if (!r.divergence) {
    const auto& pa = ra.state.executors.front().model.params;
    const auto& pb = rb.state.executors.front().model.params;
    for (std::size_t i = 0; i < pa.size() && !r.divergence; ++i) {
      if (std::bit_cast<std::uint64_t>(pa[i]) != std::bit_cast<std::uint64_t>(pb[i])) {
        r.divergence = Divergence{a.total_steps(), "params", {}, static_cast<std::uint32_t>(i)};
      }
    }
  }
  r.equal = !r.divergence;
  return r;
}

std::vector<ScenarioResult> run_matrix(std::span<const ReproScenario> scenarios, DeterminismMode mode) {
  std::vector<ScenarioResult> out;
  for (const auto& s : scenarios) out.push_back(run_scenario(s, mode));
  return out;
}

}  // namespace estrain
