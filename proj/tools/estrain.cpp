// Copyright 2026 The estrain Authors
// SPDX-License-Identifier: Apache-2.0

// estrain command-line tool. Exit codes: 0 success or identical, 1 finding
// (divergence, broken guarantee), 2 usage or input error.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "estrain/cluster.hpp"
#include "estrain/config.hpp"
#include "estrain/error.hpp"
#include "estrain/planner.hpp"
#include "estrain/repro.hpp"
#include "estrain/runlog.hpp"
#include "estrain/training.hpp"

namespace {

using namespace estrain;

std::string join(const std::vector<std::uint32_t>& v) {
  std::string s = "(";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s + ")";
}

int cmd_train(const std::string& config, const std::string& out, const std::string& ckpt) {
  const RunConfig rc = parse_run_config(read_file(config));
  const RunOutput r = run_training(rc);
  write_file(out, r.log.to_text());
  if (!ckpt.empty()) {
    write_file(ckpt, std::string_view(reinterpret_cast<const char*>(r.checkpoint.data()), r.checkpoint.size()));
  }
  std::printf("trained %llu mini-batches, final param hash %016llx\n",
              static_cast<unsigned long long>(rc.total_steps()),
              static_cast<unsigned long long>(r.log.records.empty() ? 0 : r.log.records.back().param_hash));
  return 0;
}

int cmd_reprocheck(const std::string& mode_text, const std::string& matrix) {
  const DeterminismMode mode = DeterminismMode::parse(mode_text);
  mode.validate();
  const auto scenarios = parse_matrix(read_file(matrix));
  int exit = 0;
  std::printf("%-5s %-10s %-14s %s\n", "level", "guarantee", "result", "detail");
  for (const auto& s : scenarios) {
    const ScenarioResult r = run_scenario(s, mode);
    const std::string detail = r.divergence ? describe(*r.divergence) : s.description;
    std::printf("%-5s %-10s %-14s %s\n", r.level.c_str(), r.guaranteed ? "yes" : "no",
                r.equal ? "BITWISE-EQUAL" : "DIVERGED", detail.c_str());
    if (r.guaranteed && !r.equal) exit = 1;
  }
  std::fflush(stdout);
  return exit;
}

int cmd_bitdiff(const std::string& a, const std::string& b) {
  const RunLog la = RunLog::parse(read_file(a));
  const RunLog lb = RunLog::parse(read_file(b));
  const auto d = first_divergence(la, lb);
  if (!d) {
    std::printf("IDENTICAL\n");
    return 0;
  }
  std::printf("%s\n", describe(*d).c_str());
  return 1;
}

int cmd_plan(const std::string& pool_path, const std::string& profile_path, std::uint32_t minp, std::uint32_t maxp,
             std::size_t top, bool fast) {
  const ClusterSpec cluster = parse_cluster(read_file(pool_path));
  const WorkloadProfile profile = parse_profile(read_file(profile_path), cluster);
  const JobShape shape{minp, maxp};
  if (minp > maxp || maxp == 0) throw Error(Errc::usage, "need 0 <= minp <= maxp and maxp >= 1");
  PlanOptions opt{cluster.params.waste_threshold};
  const auto configs = fast ? enumerate_configs_fast(cluster.pool, profile, shape, opt)
                            : enumerate_configs(cluster.pool, profile, shape, opt);
  std::string names = "(";
  for (std::size_t i = 0; i < cluster.pool.size(); ++i) names += (i ? "," : "") + cluster.pool.types[i].name;
  names += ")";
  std::printf("types %s\n", names.c_str());
  std::printf("%-4s %-12s %-12s %-12s %-12s %-10s %-10s %s\n", "rank", "nums", "executors", "threads", "A", "perf",
              "waste", "waste_norm%");
  for (std::size_t r = 0; r < configs.size() && r < top; ++r) {
    const auto& c = configs[r];
    std::vector<std::uint32_t> a(c.nums.size());
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = c.nums[i] ? c.cus_per_gpu(i) : 0;
    std::printf("%-4zu %-12s %-12s %-12s %-12s %-10.6f %-10.6f %.3f\n", r + 1, join(c.nums).c_str(),
                join(c.executors).c_str(), join(c.threads).c_str(), join(a).c_str(), c.perf, c.waste,
                c.waste_norm);
  }
  if (configs.empty()) {
    std::printf("no feasible configuration\n");
    return 1;
  }
  return 0;
}

int cmd_simulate(const std::string& trace_path, const std::string& pool_path, const std::string& mode_text,
                 const std::string& out_dir) {
  const SimMode mode = parse_sim_mode(mode_text);
  const auto trace = parse_trace(read_file(trace_path));
  const ClusterSpec cluster = parse_cluster(read_file(pool_path));
  const SimMetrics m = simulate(trace, cluster, mode);
  std::filesystem::create_directories(out_dir);
  const std::string prefix = out_dir + "/" + to_string(mode);
  write_file(prefix + "_jobs.csv", m.jobs_csv());
  write_file(prefix + "_timeline.csv", m.timeline_csv());
  write_file(prefix + "_summary.csv", m.summary_csv());
  write_file(prefix + "_events.csv", m.events_csv());
  for (const auto& d : m.diagnostics) std::fprintf(stderr, "%s\n", d.c_str());
  std::printf("%s", m.summary_csv().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bitwise-reproducible elastic training toolkit"};
  app.require_subcommand(1);

  std::string config, out, ckpt;
  auto* train = app.add_subcommand("train", "run a training config and write its run log");
  train->add_option("--config", config, "training config (JSON)")->required();
  train->add_option("--out", out, "run log output")->required();
  train->add_option("--ckpt", ckpt, "final checkpoint output");

  std::string mode, matrix;
  auto* repro = app.add_subcommand("reprocheck", "run the S1-S5 reproducibility matrix");
  repro->add_option("--mode", mode, "d0, d1, d1d2 or d0d2")->required();
  repro->add_option("--matrix", matrix, "matrix config (JSON)")->required();

  std::string log_a, log_b;
  auto* bitdiff = app.add_subcommand("bitdiff", "locate the first difference between two run logs");
  bitdiff->add_option("log_a", log_a)->required();
  bitdiff->add_option("log_b", log_b)->required();

  std::string pool, profile;
  std::uint32_t minp = 0, maxp = 1;
  std::size_t top = 10;
  bool fast = false;
  auto* plan = app.add_subcommand("plan", "rank resource configurations for a job");
  plan->add_option("--pool", pool, "pool config (JSON)")->required();
  plan->add_option("--profile", profile, "workload profile (JSON)")->required();
  plan->add_option("--minp", minp, "minimum GPUs")->required();
  plan->add_option("--maxp", maxp, "maximum parallelism (ESTs)")->required();
  plan->add_option("--top", top, "rows to print");
  plan->add_flag("--fast", fast, "use the integer-approximation search");

  std::string trace, sim_mode, out_dir;
  auto* sim = app.add_subcommand("simulate", "simulate a job trace on a pool");
  sim->add_option("--trace", trace, "trace CSV")->required();
  sim->add_option("--pool", pool, "pool config (JSON)")->required();
  sim->add_option("--mode", sim_mode, "yarn, homo or heter")->required();
  sim->add_option("--out", out_dir, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*train) return cmd_train(config, out, ckpt);
    if (*repro) return cmd_reprocheck(mode, matrix);
    if (*bitdiff) return cmd_bitdiff(log_a, log_b);
    if (*plan) return cmd_plan(pool, profile, minp, maxp, top, fast);
    if (*sim) return cmd_simulate(trace, pool, sim_mode, out_dir);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "estrain: %s\n", e.what());
    return 2;
  }
  return 2;
}
