// Copyright 2026 The estrain Authors
// SPDX-License-Identifier: Apache-2.0

#include "estrain/engine.hpp"

#include <algorithm>
#include <string>

#include "estrain/checkpoint.hpp"
#include "estrain/error.hpp"
#include "estrain/planner.hpp"

namespace estrain {

DeterminismMode DeterminismMode::parse(const std::string& text) {
  if (text == "d0") return {true, false, false};
  if (text == "d1") return {true, true, false};
  if (text == "d1d2") return {true, true, true};
  if (text == "d0d2") return {true, false, true};
  throw Error(Errc::usage, "unknown determinism mode '" + text + "' (expected d0, d1, d0d2 or d1d2)");
}

std::string DeterminismMode::to_string() const {
  std::string s = d1 ? "d1" : "d0";
  if (d2) s += "d2";
  return s;
}

void DeterminismMode::validate() const {
  // Without D0 nothing is reproducible, so no supported mode turns it off.
  if (!d0) throw Error(Errc::config, "determinism mode must include D0");
}

PipeConfig JobSpec::pipe_config() const {
  PipeConfig pc;
  pc.seed = seed;
  pc.dataset_size = dataset_size;
  pc.total_p = max_p;
  pc.micro_batch = micro_batch;
  pc.shuffle = shuffle;
  pc.jitter = jitter;
  pc.prefetch_depth = prefetch_depth;
  return pc;
}

void JobSpec::validate() const {
  if (max_p < 1) throw Error(Errc::config, "max_p must be >= 1");
  if (micro_batch < 1) throw Error(Errc::config, "micro_batch must be >= 1");
  if (bucket_cap < 1) throw Error(Errc::config, "bucket_cap must be >= 1");
  if (prefetch_depth < 1) throw Error(Errc::config, "prefetch_depth must be >= 1");
  if (steps_per_epoch(dataset_size, max_p, micro_batch) == 0) {
    throw Error(Errc::config, "dataset_size too small for one global batch");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw Error(Errc::config, "dropout must lie in [0, 1)");
}

std::vector<std::vector<std::uint32_t>> assign_ranks(const Layout& layout, std::uint32_t max_p) {
  if (layout.empty()) throw Error(Errc::config, "layout needs at least one executor");
  const bool even = std::all_of(layout.begin(), layout.end(), [](const auto& e) { return e.threads == 0; });
  const bool given = std::all_of(layout.begin(), layout.end(), [](const auto& e) { return e.threads > 0; });
  if (!even && !given) throw Error(Errc::config, "either all or no executors must give a thread count");

  std::vector<std::uint32_t> quota(layout.size());
  if (even) {
    const auto per = static_cast<std::uint32_t>((max_p + layout.size() - 1) / layout.size());
    std::fill(quota.begin(), quota.end(), per);
  } else {
    std::uint64_t total = 0;
    for (std::size_t k = 0; k < layout.size(); ++k) {
      quota[k] = layout[k].threads;
      total += quota[k];
    }
    if (total < max_p) {
      throw Error(Errc::config, "layout hosts " + std::to_string(total) + " ESTs but max_p is " +
                                    std::to_string(max_p));
    }
  }
  std::vector<std::vector<std::uint32_t>> out(layout.size());
  std::uint32_t next = 0;
  for (std::size_t k = 0; k < layout.size() && next < max_p; ++k) {
    for (std::uint32_t t = 0; t < quota[k] && next < max_p; ++t) out[k].push_back(next++);
  }
  return out;
}

std::vector<ExecutorState> place_executors(const Layout& layout, std::uint32_t max_p, const ToyModel& model,
                                           const OptState& opt) {
  const auto ranks = assign_ranks(layout, max_p);
  std::vector<ExecutorState> out;
  for (std::size_t k = 0; k < layout.size(); ++k) {
    if (ranks[k].empty()) continue;
    ExecutorState ex;
    ex.device_kind = layout[k].device_kind;
    ex.kernel_profile = kernel_profile_for(layout[k].device_kind);
    ex.assigned_ests = ranks[k];
    ex.model = model;
    ex.opt = opt;
    out.push_back(std::move(ex));
  }
  return out;
}

namespace {

std::vector<std::uint32_t> comm_world(const TrainingState& ts) {
  // D1 pins communication to max_p virtual ranks; otherwise the world is
  // the physical executors.
  if (ts.determinism.d1) return std::vector<std::uint32_t>(ts.job.max_p, 1);
  std::vector<std::uint32_t> world;
  for (const auto& ex : ts.executors) world.push_back(static_cast<std::uint32_t>(ex.assigned_ests.size()));
  return world;
}

// Device-memory meter for one executor over one mini-batch.
struct Meter {
  std::uint64_t current = 0;
  std::uint64_t peak = 0;
  void alloc(std::uint64_t n) {
    current += n;
    peak = std::max(peak, current);
  }
  void release(std::uint64_t n) { current -= n; }
};

}  // namespace

TrainingState init_training(const JobSpec& job, DeterminismMode mode, const Layout& layout) {
  job.validate();
  mode.validate();
  TrainingState ts;
  ts.job = job;
  ts.determinism = mode;
  ts.ests.resize(job.max_p);
  for (std::uint32_t r = 0; r < job.max_p; ++r) {
    ts.ests[r].virtual_rank = r;
    ts.ests[r].dropout_rng = Rng64{derive_seed(job.seed, StreamTag::dropout, r)};
  }
  OptState opt;
  opt.lr = job.lr;
  opt.momentum = job.momentum;
  ts.executors = place_executors(layout, job.max_p, ToyModel::initialize(job.seed), opt);
  ts.bucket_map = build_buckets_initial(kParamCount, job.bucket_cap);
  ts.bucket_rebuild_pending = true;
  ts.queue_buffer = QueueBuffer(job.prefetch_depth, job.max_p);
  return ts;
}

ReduceVariant effective_variant(const ExecutorState& ex, DeterminismMode mode) {
  return mode.d2 ? ReduceVariant::sequential() : ex.kernel_profile.reduce_variant;
}

bool executors_agree(const TrainingState& ts) {
  for (std::size_t k = 1; k < ts.executors.size(); ++k) {
    if (!(ts.executors[k].model == ts.executors[0].model) || !(ts.executors[k].opt == ts.executors[0].opt)) {
      return false;
    }
  }
  return true;
}

MinibatchResult run_minibatch(TrainingState& ts, std::span<const Sample> global_batch) {
  const std::uint32_t max_p = ts.job.max_p;
  if (global_batch.empty() || global_batch.size() % max_p != 0) {
    throw Error(Errc::config, "global batch of " + std::to_string(global_batch.size()) +
                                  " rows is not divisible by max_p " + std::to_string(max_p));
  }
  if (ts.executors.empty()) throw Error(Errc::state, "no executors");
  if (!executors_agree(ts)) throw Error(Errc::corruption, "executor replicas differ at mini-batch entry");

  const std::size_t micro = global_batch.size() / max_p;
  constexpr std::uint64_t kWord = sizeof(double);
  const std::uint64_t grad_bytes = kParamCount * kWord;
  const std::uint64_t act_bytes = micro * (3 * kHiddenDim + 1) * kWord;
  const std::uint64_t resident = 2 * kParamCount * kWord;

  MinibatchResult result;
  result.losses.assign(max_p, 0.0);
  std::vector<std::vector<double>> replicas(max_p);
  const ForwardOptions fwd{ts.job.dropout};

  for (auto& ex : ts.executors) {
    const ReduceVariant variant = effective_variant(ex, ts.determinism);
    Meter meter;
    meter.alloc(resident);
    for (std::size_t k = 0; k < ex.assigned_ests.size(); ++k) {
      const std::uint32_t rank = ex.assigned_ests[k];
      const auto micro_batch = global_batch.subspan(rank * micro, micro);
      meter.alloc(act_bytes + grad_bytes);
      ForwardResult fb = forward_backward(ex.model, micro_batch, ts.ests[rank], variant, fwd);
      meter.release(act_bytes);
      ts.ests[rank] = std::move(fb.ctx);
      result.losses[rank] = fb.loss;
      if (k + 1 < ex.assigned_ests.size()) {
        // Context switch: the gradients move to host memory until sync.
        ts.ests[rank].pending_grads = std::move(fb.grads);
        meter.release(grad_bytes);
      } else {
        replicas[rank] = std::move(fb.grads);
      }
    }
    meter.alloc(grad_bytes);  // synchronized gradient buffer
    result.memory.push_back({resident, meter.peak});
  }
  for (std::uint32_t r = 0; r < max_p; ++r) {
    if (replicas[r].empty()) replicas[r] = ts.ests[r].pending_grads;
  }

  const std::vector<double> synced = allreduce(replicas, ts.bucket_map, ring_variant());
  const SgdResult step = sgd_step(ts.executors[0].model, ts.executors[0].opt, synced);
  for (auto& ex : ts.executors) {
    ex.model = step.model;
    ex.opt = step.opt;
  }
  for (auto& est : ts.ests) {
    est.pending_grads.clear();
    est.pending_grads.shrink_to_fit();
    est.minibatch_idx += 1;
  }
  ts.global_step += 1;
  ts.epoch = ts.global_step / steps_per_epoch(ts.job.dataset_size, max_p, ts.job.micro_batch);

  if (ts.bucket_rebuild_pending) {
    const auto perm = arrival_permutation(kParamCount, ts.job.seed, comm_world(ts));
    ts.bucket_map = rebuild_buckets_first_minibatch(perm, ts.job.bucket_cap);
    ts.bucket_rebuild_pending = false;
  }
  return result;
}

DataLoader make_loader(const TrainingState& ts, std::shared_ptr<const Dataset> data, std::uint32_t workers) {
  DataLoader loader(std::move(data), ts.job.pipe_config(), workers);
  loader.set_cursor(ts.global_step);
  return loader;
}

MinibatchResult train_step(TrainingState& ts, DataLoader& loader) {
  std::vector<Sample> batch;
  batch.reserve(static_cast<std::size_t>(ts.job.max_p) * ts.job.micro_batch);
  loader.prefetch(ts.queue_buffer, ts.global_step);
  for (std::uint32_t r = 0; r < ts.job.max_p; ++r) {
    MicroBatch mb = loader.next_batch(ts.queue_buffer, ts.global_step, r);
    batch.insert(batch.end(), mb.begin(), mb.end());
  }
  MinibatchResult res = run_minibatch(ts, batch);
  loader.prefetch(ts.queue_buffer, ts.global_step);
  return res;
}

Layout layout_from_plan(const PlanConfig& plan, const DevicePool& pool) {
  if (plan.nums.size() != pool.size() || plan.executors.size() != pool.size() ||
      plan.threads.size() != pool.size()) {
    throw Error(Errc::config, "plan does not match the pool's device types");
  }
  Layout layout;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (plan.nums[i] > pool.types[i].count) {
      throw Error(Errc::config, "plan uses " + std::to_string(plan.nums[i]) + " " + pool.types[i].name +
                                    " GPUs but the pool has " + std::to_string(pool.types[i].count));
    }
    for (std::uint32_t g = 0; g < plan.nums[i]; ++g) {
      for (std::uint32_t e = 0; e < plan.executors[i]; ++e) {
        if (plan.threads[i] == 0) throw Error(Errc::config, "plan executor without threads");
        layout.push_back({pool.types[i].name, plan.threads[i]});
      }
    }
  }
  if (layout.empty()) throw Error(Errc::config, "plan uses no GPUs");
  return layout;
}

TrainingState reconfigure(const TrainingState& ts, const PlanConfig& plan, const DevicePool& pool) {
  const Layout layout = layout_from_plan(plan, pool);
  return checkpoint_restore(checkpoint_save(ts), layout);
}

}  // namespace estrain
