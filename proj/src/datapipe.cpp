// Copyright 2026 The estrain Authors
// SPDX-License-Identifier: Apache-2.0

#include "estrain/datapipe.hpp"

#include <cmath>
#include <string>

#include "estrain/error.hpp"

namespace estrain {

Dataset Dataset::synthetic(std::uint64_t seed, std::uint32_t size) {
  Dataset ds;
  ds.rows.resize(size);
  SplitMix coeff_rng(derive_seed(seed, StreamTag::dataset, 0));
  std::array<double, kInputDim> coeff{};
  for (double& c : coeff) c = coeff_rng.uniform01() * 2.0 - 1.0;
  SplitMix rng(derive_seed(seed, StreamTag::dataset, 1));
  for (Sample& s : ds.rows) {
    double dot = 0.0;
    for (std::size_t i = 0; i < kInputDim; ++i) {
      s.x[i] = rng.uniform01() * 2.0 - 1.0;
      dot = dot + coeff[i] * s.x[i];
    }
    s.y = std::sin(dot) + (rng.uniform01() - 0.5) * 0.1;
  }
  return ds;
}

std::uint64_t steps_per_epoch(std::uint32_t dataset_size, std::uint32_t total_p, std::uint32_t micro_batch) {
  if (total_p == 0) throw Error(Errc::config, "total_p must be >= 1");
  if (micro_batch == 0) throw Error(Errc::config, "micro_batch must be >= 1");
  return dataset_size / (static_cast<std::uint64_t>(total_p) * micro_batch);
}

std::vector<std::vector<std::uint32_t>> epoch_indices(const SamplePlan& plan) {
  if (plan.total_p == 0) throw Error(Errc::config, "total_p must be >= 1");
  if (plan.dataset_size < plan.total_p) {
    throw Error(Errc::config, "dataset smaller than the number of ESTs");
  }
  const std::uint32_t n = plan.dataset_size;
  std::vector<std::uint32_t> perm(n);
  for (std::uint32_t k = 0; k < n; ++k) perm[k] = k;
  if (plan.shuffle) {
    SplitMix rng(plan.seed ^ plan.epoch);
    for (std::uint32_t i = n - 1; i > 0; --i) {
      const auto j = static_cast<std::uint32_t>(rng.next() % (static_cast<std::uint64_t>(i) + 1));
      std::swap(perm[i], perm[j]);
    }
  }
  const std::uint64_t usable =
      steps_per_epoch(n, plan.total_p, plan.micro_batch) * plan.total_p * plan.micro_batch;
  std::vector<std::vector<std::uint32_t>> lists(plan.total_p);
  for (auto& l : lists) l.reserve(usable / plan.total_p);
  for (std::uint64_t t = 0; t < usable; ++t) lists[t % plan.total_p].push_back(perm[t]);
  return lists;
}

namespace {

bool key_less(std::uint64_t mb_a, std::uint32_t est_a, std::uint64_t mb_b, std::uint32_t est_b) {
  return mb_a < mb_b || (mb_a == mb_b && est_a < est_b);
}

}  // namespace

void QueueBuffer::push(const WorkerState& ws) {
  if (!states_.empty()) {
    const auto& back = states_.back();
    if (!key_less(back.minibatch_idx, back.est_index, ws.minibatch_idx, ws.est_index)) {
      throw Error(Errc::progress, "queue states must be pushed in (mini-batch, EST) order");
    }
  }
  if (states_.size() >= static_cast<std::size_t>(prefetch_depth_) * total_p_) {
    throw Error(Errc::state, "queue buffer full");
  }
  states_.push_back(ws);
}

std::optional<WorkerState> QueueBuffer::take(std::uint64_t mb, std::uint32_t est) {
  for (auto it = states_.begin(); it != states_.end(); ++it) {
    if (it->minibatch_idx == mb && it->est_index == est) {
      WorkerState ws = *it;
      states_.erase(it);
      return ws;
    }
  }
  return std::nullopt;
}

bool QueueBuffer::contains(std::uint64_t mb, std::uint32_t est) const {
  for (const auto& ws : states_) {
    if (ws.minibatch_idx == mb && ws.est_index == est) return true;
  }
  return false;
}

std::vector<WorkerState> QueueBuffer::drain_for_checkpoint(std::int64_t consumed_through) const {
  std::vector<WorkerState> out;
  for (const auto& ws : states_) {
    if (static_cast<std::int64_t>(ws.minibatch_idx) > consumed_through) out.push_back(ws);
  }
  return out;
}

WorkerState initial_worker_state(const PipeConfig& cfg, std::uint64_t mb, std::uint32_t est) {
  WorkerState ws;
  ws.est_index = est;
  ws.minibatch_idx = mb;
  ws.rng = Rng64{derive_seed(cfg.seed, StreamTag::augment, mb * cfg.total_p + est)};
  return ws;
}

DataLoader::DataLoader(std::shared_ptr<const Dataset> data, PipeConfig cfg, std::uint32_t workers)
    : data_(std::move(data)), cfg_(cfg), workers_(workers), cursor_(cfg.total_p, 0) {
  if (workers_ < 1) throw Error(Errc::config, "need at least one data worker");
  if (!data_ || data_->rows.size() != cfg_.dataset_size) {
    throw Error(Errc::config, "dataset size does not match pipeline config");
  }
  spe_ = steps_per_epoch(cfg_.dataset_size, cfg_.total_p, cfg_.micro_batch);
  if (spe_ == 0) throw Error(Errc::config, "dataset too small for one mini-batch");
}

void DataLoader::set_cursor(std::uint64_t mb) {
  cursor_.assign(cfg_.total_p, mb);
  ready_.clear();
}

const std::vector<std::vector<std::uint32_t>>& DataLoader::indices_for_epoch(std::uint64_t epoch) {
  auto it = epochs_.find(epoch);
  if (it == epochs_.end()) {
    SamplePlan plan{cfg_.seed, epoch, cfg_.dataset_size, cfg_.total_p, cfg_.micro_batch, cfg_.shuffle};
    it = epochs_.emplace(epoch, epoch_indices(plan)).first;
    while (epochs_.size() > 3) epochs_.erase(epochs_.begin());
  }
  return it->second;
}

MicroBatch DataLoader::build(const WorkerState& ws,
                             const std::vector<std::vector<std::uint32_t>>& lists) const {
  const std::uint64_t pos = ws.minibatch_idx % spe_;
  const auto& mine = lists.at(ws.est_index);
  MicroBatch batch(cfg_.micro_batch);
  Rng64 rng = ws.rng;
  for (std::uint32_t s = 0; s < cfg_.micro_batch; ++s) {
    batch[s] = data_->rows[mine[pos * cfg_.micro_batch + s]];
    if (cfg_.jitter != 0.0) {
      const RngUniform u = rng_uniform01(rng);
      rng = u.next;
      const double shift = (u.value - 0.5) * 2.0 * cfg_.jitter;
      for (double& v : batch[s].x) v = v + shift;
    }
  }
  return batch;
}

std::vector<MicroBatch> DataLoader::materialize(std::span<const WorkerState> states) {
  std::vector<const std::vector<std::vector<std::uint32_t>>*> lists(states.size());
  for (std::size_t k = 0; k < states.size(); ++k) {
    lists[k] = &indices_for_epoch(states[k].minibatch_idx / spe_);
  }
  std::vector<MicroBatch> out(states.size());
  const auto n = static_cast<std::int64_t>(states.size());
#pragma omp parallel for num_threads(workers_) schedule(static, 1)
  for (std::int64_t k = 0; k < n; ++k) {
    out[k] = build(states[k], *lists[k]);
  }
  return out;
}

std::vector<MicroBatch> DataLoader::materialize_serial(std::span<const WorkerState> states) {
  std::vector<MicroBatch> out;
  out.reserve(states.size());
  for (const auto& ws : states) out.push_back(build(ws, indices_for_epoch(ws.minibatch_idx / spe_)));
  return out;
}

void DataLoader::prefetch(QueueBuffer& qb, std::uint64_t next_mb) {
  std::vector<WorkerState> fresh;
  for (std::uint64_t mb = next_mb; mb < next_mb + qb.prefetch_depth(); ++mb) {
    for (std::uint32_t est = 0; est < cfg_.total_p; ++est) {
      if (qb.contains(mb, est) || mb < cursor_[est]) continue;
      if (!qb.empty()) {
        const auto& back = qb.states().back();
        if (!key_less(back.minibatch_idx, back.est_index, mb, est)) continue;
      }
      WorkerState ws = initial_worker_state(cfg_, mb, est);
      ws.worker_slot = static_cast<std::uint32_t>(dispatched_++ % workers_);
      qb.push(ws);
    }
  }
  // Also materialize restored states that carry no cached batch yet.
  for (const auto& ws : qb.states()) {
    if (!ready_.count({ws.minibatch_idx, ws.est_index})) fresh.push_back(ws);
  }
  std::vector<MicroBatch> built = materialize(fresh);
  for (std::size_t k = 0; k < fresh.size(); ++k) {
    ready_[{fresh[k].minibatch_idx, fresh[k].est_index}] = std::move(built[k]);
  }
}

MicroBatch DataLoader::next_batch(QueueBuffer& qb, std::uint64_t mb, std::uint32_t est) {
  if (est >= cfg_.total_p) throw Error(Errc::input, "EST index out of range");
  if (mb != cursor_[est]) {
    throw Error(Errc::progress, "EST " + std::to_string(est) + " requested mini-batch " + std::to_string(mb) +
                                    " but expects " + std::to_string(cursor_[est]));
  }
  if (!qb.contains(mb, est)) prefetch(qb, mb);
  const auto ws = qb.take(mb, est);
  if (!ws) throw Error(Errc::progress, "no queued state for mini-batch " + std::to_string(mb));
  MicroBatch batch;
  if (auto it = ready_.find({mb, est}); it != ready_.end()) {
    batch = std::move(it->second);
    ready_.erase(it);
  } else {
    batch = build(*ws, indices_for_epoch(mb / spe_));
  }
  cursor_[est] = mb + 1;
  return batch;
}

}  // namespace estrain
