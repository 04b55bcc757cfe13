// Copyright 2026 The estrain Authors
// SPDX-License-Identifier: Apache-2.0

#include "estrain/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <string>

#include "estrain/error.hpp"

namespace estrain {

namespace {

constexpr char kMagic[4] = {'E', 'S', 'C', 'K'};

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int b = 0; b < 4; ++b) out_.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
  }
  void u64(std::uint64_t v) {
    for (int b = 0; b < 8; ++b) out_.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void count(std::size_t n) {
    if (n > 0xFFFFFFFFu) throw Error(Errc::state, "section too large for checkpoint");
    u32(static_cast<std::uint32_t>(n));
  }
  void raw(const char* p, std::size_t n) { out_.insert(out_.end(), p, p + n); }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(take(4)); }
  std::uint64_t u64() { return take(8); }
  double f64() { return std::bit_cast<double>(take(8)); }
  bool flag() {
    const std::size_t at = pos_;
    const std::uint8_t v = u8();
    if (v > 1) throw FormatError(at, "flag byte " + std::to_string(v));
    return v == 1;
  }
  /// Element count for a section whose entries occupy `entry_bytes` each.
  std::uint32_t count(std::size_t entry_bytes) {
    const std::size_t at = pos_;
    const std::uint32_t n = u32();
    if (static_cast<std::uint64_t>(n) * entry_bytes > remaining()) {
      throw FormatError(at, "count " + std::to_string(n) + " exceeds remaining bytes");
    }
    return n;
  }
  std::size_t pos() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return in_.size() - pos_; }

 private:
  std::uint64_t take(std::size_t n) {
    if (remaining() < n) throw FormatError(pos_, "truncated checkpoint");
    std::uint64_t v = 0;
    for (std::size_t b = 0; b < n; ++b) v |= static_cast<std::uint64_t>(in_[pos_ + b]) << (8 * b);
    pos_ += n;
    return v;
  }

  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> checkpoint_save(const TrainingState& ts) {
  for (const auto& est : ts.ests) {
    if (!est.pending_grads.empty()) {
      throw Error(Errc::state, "checkpoint requested inside a mini-batch");
    }
  }
  if (ts.executors.empty()) throw Error(Errc::state, "no executors to checkpoint");
  if (!executors_agree(ts)) throw Error(Errc::corruption, "executor replicas differ at checkpoint");

  const ExecutorState& ex = ts.executors.front();
  Writer w;
  w.raw(kMagic, 4);
  w.u32(kCheckpointVersion);

  w.count(ex.model.params.size());
  for (double p : ex.model.params) w.f64(p);

  w.f64(ex.opt.lr);
  w.f64(ex.opt.momentum);
  w.count(ex.opt.velocity.size());
  for (double v : ex.opt.velocity) w.f64(v);

  const JobSpec& job = ts.job;
  w.u8(ts.determinism.d0);
  w.u8(ts.determinism.d1);
  w.u8(ts.determinism.d2);
  w.u64(job.seed);
  w.u32(job.max_p);
  w.u32(job.micro_batch);
  w.u32(job.dataset_size);
  w.u32(job.bucket_cap);
  w.u32(job.prefetch_depth);
  w.u8(job.shuffle);
  w.f64(job.dropout);
  w.f64(job.jitter);

  if (ts.determinism.d1) {
    w.u32(ts.bucket_map.capacity);
    w.count(ts.bucket_map.buckets.size());
    for (const auto& b : ts.bucket_map.buckets) {
      w.count(b.size());
      for (std::uint32_t idx : b) w.u32(idx);
    }
  }

  w.count(ts.ests.size());
  for (const auto& est : ts.ests) {
    w.u32(est.virtual_rank);
    w.u64(est.dropout_rng.state);
    w.f64(est.stat.running_mean);
    w.u64(est.stat.update_count);
    w.u64(est.minibatch_idx);
  }

  const auto pending = ts.queue_buffer.drain_for_checkpoint(static_cast<std::int64_t>(ts.global_step) - 1);
  w.u32(ts.queue_buffer.prefetch_depth());
  w.u32(ts.queue_buffer.total_p());
  w.count(pending.size());
  for (const auto& ws : pending) {
    w.u32(ws.est_index);
    w.u32(ws.worker_slot);
    w.u64(ws.rng.state);
    w.u64(ws.minibatch_idx);
  }

  w.u64(ts.global_step);
  w.u64(ts.epoch);
  return w.take();
}

TrainingState checkpoint_restore(std::span<const std::uint8_t> bytes, const Layout& layout) {
  Reader r(bytes);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError(0, "missing ESCK magic");
  }
  for (int k = 0; k < 4; ++k) r.u8();
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw Error(Errc::version, "checkpoint version " + std::to_string(version) + " is not supported (expected " +
                                   std::to_string(kCheckpointVersion) + ")");
  }

  std::size_t at = r.pos();
  const std::uint32_t nparams = r.count(8);
  if (nparams != kParamCount) throw FormatError(at, "parameter count " + std::to_string(nparams));
  ToyModel model;
  for (double& p : model.params) p = r.f64();

  OptState opt;
  opt.lr = r.f64();
  opt.momentum = r.f64();
  at = r.pos();
  const std::uint32_t nvel = r.count(8);
  if (nvel != kParamCount) throw FormatError(at, "optimizer buffer length " + std::to_string(nvel));
  for (double& v : opt.velocity) v = r.f64();

  TrainingState ts;
  ts.determinism.d0 = r.flag();
  ts.determinism.d1 = r.flag();
  ts.determinism.d2 = r.flag();
  JobSpec& job = ts.job;
  job.seed = r.u64();
  job.max_p = r.u32();
  job.micro_batch = r.u32();
  job.dataset_size = r.u32();
  job.bucket_cap = r.u32();
  job.prefetch_depth = r.u32();
  job.shuffle = r.flag();
  job.dropout = r.f64();
  job.jitter = r.f64();
  job.lr = opt.lr;
  job.momentum = opt.momentum;
  try {
    job.validate();
    ts.determinism.validate();
  } catch (const Error& e) {
    throw FormatError(r.pos(), std::string("invalid job header: ") + e.what());
  }

  if (ts.determinism.d1) {
    at = r.pos();
    ts.bucket_map.capacity = r.u32();
    const std::uint32_t nb = r.count(4);
    ts.bucket_map.buckets.resize(nb);
    for (auto& b : ts.bucket_map.buckets) {
      const std::uint32_t len = r.count(4);
      b.resize(len);
      for (auto& idx : b) idx = r.u32();
    }
    if (!ts.bucket_map.is_partition() || ts.bucket_map.param_count() != kParamCount) {
      throw FormatError(at, "bucket map is not a partition of the parameters");
    }
    ts.bucket_rebuild_pending = false;
  } else {
    ts.bucket_map = build_buckets_initial(kParamCount, job.bucket_cap);
    ts.bucket_rebuild_pending = true;
  }

  at = r.pos();
  const std::uint32_t nests = r.count(kEstContextBytes);
  if (nests != job.max_p) {
    throw FormatError(at, "EST count " + std::to_string(nests) + " != max_p " + std::to_string(job.max_p));
  }
  ts.ests.resize(nests);
  for (std::uint32_t k = 0; k < nests; ++k) {
    at = r.pos();
    EstContext& est = ts.ests[k];
    est.virtual_rank = r.u32();
    if (est.virtual_rank != k) throw FormatError(at, "EST records out of rank order");
    est.dropout_rng.state = r.u64();
    est.stat.running_mean = r.f64();
    est.stat.update_count = r.u64();
    est.minibatch_idx = r.u64();
  }

  const std::uint32_t depth = r.u32();
  const std::uint32_t total_p = r.u32();
  ts.queue_buffer = QueueBuffer(depth, total_p);
  const std::uint32_t nstates = r.count(24);
  for (std::uint32_t k = 0; k < nstates; ++k) {
    at = r.pos();
    WorkerState ws;
    ws.est_index = r.u32();
    ws.worker_slot = r.u32();
    ws.rng.state = r.u64();
    ws.minibatch_idx = r.u64();
    try {
      ts.queue_buffer.push(ws);
    } catch (const Error& e) {
      throw FormatError(at, std::string("bad queue state: ") + e.what());
    }
  }

  ts.global_step = r.u64();
  ts.epoch = r.u64();
  if (r.remaining() != 0) throw FormatError(r.pos(), "trailing bytes");

  ts.executors = place_executors(layout, job.max_p, model, opt);
  return ts;
}

}  // namespace estrain
