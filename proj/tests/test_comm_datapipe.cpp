// Copyright 2026 The estrain Authors
// SPDX-License-Identifier: Apache-2.0

#include <bit>
#include <cmath>
#include <cstring>
#include <memory>
#include <numeric>
#include <set>
#include <vector>

#include "doctest.h"
#include "estrain/comm.hpp"
#include "estrain/datapipe.hpp"
#include "estrain/error.hpp"
#include "estrain/rng.hpp"

using namespace estrain;

namespace {

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

std::vector<std::vector<double>> replicas_with_spread(std::size_t ranks, std::size_t n, std::uint64_t seed) {
  SplitMix r(seed);
  std::vector<std::vector<double>> reps(ranks, std::vector<double>(n));
  for (auto& rep : reps) {
    for (auto& v : rep) v = (r.uniform01() - 0.5) * std::ldexp(1.0, static_cast<int>(r.next() % 80) - 40);
  }
  return reps;
}

}  // namespace

TEST_SUITE("comm") {
  TEST_CASE("initial buckets pack the reverse order") {
    const BucketMap bm = build_buckets_initial(161, 64);
    REQUIRE(bm.buckets.size() == 3);
    CHECK(bm.buckets[0].size() == 64);
    CHECK(bm.buckets[2].size() == 33);
    CHECK(bm.buckets[0].front() == 160);
    CHECK(bm.buckets[2].back() == 0);
    CHECK(bm.is_partition());
    CHECK(bm.param_count() == 161);
    CHECK_THROWS_AS(build_buckets_initial(10, 0), Error);
  }

  TEST_CASE("rebuild needs a permutation") {
    std::vector<std::uint32_t> perm{2, 0, 1};
    const BucketMap bm = rebuild_buckets_first_minibatch(perm, 2);
    CHECK(bm.buckets == std::vector<std::vector<std::uint32_t>>{{2, 0}, {1}});
    std::vector<std::uint32_t> dup{0, 0, 1};
    std::vector<std::uint32_t> out_of_range{0, 3, 1};
    CHECK_THROWS_AS(rebuild_buckets_first_minibatch(dup, 2), Error);
    CHECK_THROWS_AS(rebuild_buckets_first_minibatch(out_of_range, 2), Error);
  }

  TEST_CASE("arrival order is keyed on the world layout") {
    const std::vector<std::uint32_t> four{1, 1, 1, 1}, two{2, 2}, virt{1, 1, 1, 1};
    const auto a = arrival_permutation(161, 9, four);
    CHECK(a == arrival_permutation(161, 9, virt));
    CHECK(a != arrival_permutation(161, 9, two));
    CHECK(a != arrival_permutation(161, 10, four));
    std::vector<std::uint32_t> sorted = a;
    std::sort(sorted.begin(), sorted.end());
    for (std::uint32_t k = 0; k < 161; ++k) CHECK(sorted[k] == k);
  }

  TEST_CASE("sequential all-reduce is independent of the bucket map") {
    const auto reps = replicas_with_spread(4, 161, 5);
    const BucketMap init = build_buckets_initial(161, 64);
    const BucketMap shuffled =
        rebuild_buckets_first_minibatch(arrival_permutation(161, 3, std::vector<std::uint32_t>{2, 2}), 64);
    const auto a = allreduce(reps, init, ReduceVariant::sequential());
    CHECK(same_bits(a, allreduce(reps, shuffled, ReduceVariant::sequential())));
    // Ascending-rank fold, then the mean.
    for (std::size_t k = 0; k < 161; ++k) {
      double acc = 0.0;
      for (const auto& r : reps) acc += r[k];
      CHECK(std::bit_cast<std::uint64_t>(a[k]) == std::bit_cast<std::uint64_t>(acc / 4.0));
    }
  }

  TEST_CASE("ring all-reduce bits depend on the bucket map") {
    const auto reps = replicas_with_spread(4, 161, 5);
    const BucketMap init = build_buckets_initial(161, 64);
    const BucketMap shuffled =
        rebuild_buckets_first_minibatch(arrival_permutation(161, 3, std::vector<std::uint32_t>{2, 2}), 64);
    const auto a = allreduce(reps, init, ReduceVariant::tree(2));
    const auto b = allreduce(reps, shuffled, ReduceVariant::tree(2));
    CHECK_FALSE(same_bits(a, b));
    CHECK(same_bits(a, allreduce(reps, init, ReduceVariant::tree(2))));
    for (std::size_t k = 0; k < 161; ++k) CHECK(a[k] == doctest::Approx(b[k]).epsilon(1e-12));
  }

  TEST_CASE("all-reduce input errors") {
    const BucketMap bm = build_buckets_initial(4, 2);
    std::vector<std::vector<double>> none;
    CHECK_THROWS_AS(allreduce(none, bm, ReduceVariant::sequential()), Error);
    std::vector<std::vector<double>> ragged{{1, 2, 3, 4}, {1, 2, 3}};
    CHECK_THROWS_AS(allreduce(ragged, bm, ReduceVariant::sequential()), Error);
    std::vector<std::vector<double>> wrong{{1, 2, 3}};
    CHECK_THROWS_AS(allreduce(wrong, bm, ReduceVariant::sequential()), Error);
  }
}

namespace {

std::vector<std::uint8_t> bytes_of(const std::vector<MicroBatch>& batches) {
  std::vector<std::uint8_t> out;
  for (const auto& mb : batches) {
    for (const auto& s : mb) {
      const auto* p = reinterpret_cast<const std::uint8_t*>(&s);
      out.insert(out.end(), p, p + sizeof(Sample));
    }
  }
  return out;
}

PipeConfig pipe(std::uint32_t n, std::uint32_t p, std::uint32_t micro) {
  PipeConfig c;
  c.seed = 11;
  c.dataset_size = n;
  c.total_p = p;
  c.micro_batch = micro;
  return c;
}

// Every micro-batch of `steps` mini-batches in (mb, est) order.
std::vector<MicroBatch> drain(DataLoader& loader, QueueBuffer& qb, std::uint64_t from, std::uint64_t steps) {
  std::vector<MicroBatch> out;
  for (std::uint64_t mb = from; mb < from + steps; ++mb) {
    loader.prefetch(qb, mb);
    for (std::uint32_t e = 0; e < loader.config().total_p; ++e) out.push_back(loader.next_batch(qb, mb, e));
  }
  return out;
}

}  // namespace

TEST_SUITE("datapipe") {
  TEST_CASE("shuffle matches the frozen Fisher-Yates oracle") {
    SamplePlan plan{42, 0, 16, 4, 1, true};
    const auto lists = epoch_indices(plan);
    CHECK(lists == std::vector<std::vector<std::uint32_t>>{{12, 14, 11, 3}, {13, 6, 15, 0}, {4, 7, 9, 1},
                                                           {2, 8, 10, 5}});
    plan.epoch = 1;
    CHECK(epoch_indices(plan) == std::vector<std::vector<std::uint32_t>>{{12, 5, 10, 4}, {1, 14, 15, 9},
                                                                         {7, 11, 0, 13}, {2, 6, 3, 8}});
  }

  TEST_CASE("epoch partition and drop-last") {
    SamplePlan plan{3, 2, 103, 4, 5, true};
    CHECK(steps_per_epoch(103, 4, 5) == 5);
    const auto lists = epoch_indices(plan);
    std::set<std::uint32_t> seen;
    for (const auto& l : lists) {
      CHECK(l.size() == 25);
      for (auto i : l) CHECK(seen.insert(i).second);
    }
    plan.shuffle = false;
    CHECK(epoch_indices(plan)[1].front() == 1);
    CHECK_THROWS_AS(steps_per_epoch(10, 0, 1), Error);
    CHECK_THROWS_AS(steps_per_epoch(10, 1, 0), Error);
  }

  TEST_CASE("batches are identical for any worker count") {
    auto data = std::make_shared<const Dataset>(Dataset::synthetic(1, 1024));
    const PipeConfig cfg = pipe(1024, 4, 8);
    std::vector<std::uint8_t> ref;
    for (std::uint32_t w : {1u, 2u, 4u, 8u}) {
      DataLoader loader(data, cfg, w);
      QueueBuffer qb(cfg.prefetch_depth, cfg.total_p);
      const auto bytes = bytes_of(drain(loader, qb, 0, steps_per_epoch(1024, 4, 8) + 3));
      if (ref.empty()) ref = bytes;
      CHECK(bytes == ref);
    }
  }

  TEST_CASE("openmp materialize equals the serial reference") {
    auto data = std::make_shared<const Dataset>(Dataset::synthetic(2, 256));
    const PipeConfig cfg = pipe(256, 4, 4);
    std::vector<WorkerState> states;
    for (std::uint64_t mb = 0; mb < 20; ++mb) {
      for (std::uint32_t e = 0; e < 4; ++e) {
        WorkerState ws = initial_worker_state(cfg, mb, e);
        ws.worker_slot = static_cast<std::uint32_t>((mb * 4 + e) % 3);
        states.push_back(ws);
      }
    }
    DataLoader a(data, cfg, 3), b(data, cfg, 3);
    CHECK(bytes_of(a.materialize(states)) == bytes_of(b.materialize_serial(states)));
  }

  TEST_CASE("restart from drained queue states reproduces the stream") {
    auto data = std::make_shared<const Dataset>(Dataset::synthetic(1, 1024));
    const PipeConfig cfg = pipe(1024, 4, 8);
    DataLoader ref_loader(data, cfg, 2);
    QueueBuffer ref_q(cfg.prefetch_depth, cfg.total_p);
    const auto ref = bytes_of(drain(ref_loader, ref_q, 0, 40));

    DataLoader first(data, cfg, 2);
    QueueBuffer q(cfg.prefetch_depth, cfg.total_p);
    auto got = drain(first, q, 0, 13);
    first.prefetch(q, 13);
    QueueBuffer restored(cfg.prefetch_depth, cfg.total_p);
    for (const auto& ws : q.drain_for_checkpoint(12)) restored.push(ws);
    DataLoader second(data, cfg, 5);
    second.set_cursor(13);
    const auto rest = drain(second, restored, 13, 27);
    got.insert(got.end(), rest.begin(), rest.end());
    CHECK(bytes_of(got) == ref);
  }

  TEST_CASE("jitter draws and disabling") {
    auto data = std::make_shared<const Dataset>(Dataset::synthetic(1, 64));
    PipeConfig cfg = pipe(64, 2, 4);
    cfg.shuffle = false;
    cfg.jitter = 0.0;
    DataLoader plain(data, cfg, 1);
    const WorkerState ws = initial_worker_state(cfg, 0, 1);
    const auto mb = plain.materialize_serial(std::vector<WorkerState>{ws}).front();
    CHECK(mb[0] == data->rows[1]);
    cfg.jitter = 0.01;
    DataLoader jit(data, cfg, 1);
    const auto mj = jit.materialize_serial(std::vector<WorkerState>{ws}).front();
    CHECK_FALSE(mj[0] == data->rows[1]);
    CHECK(std::abs(mj[0].x[0] - data->rows[1].x[0]) <= 0.01);
    CHECK(mj[0].y == data->rows[1].y);
  }

  TEST_CASE("queue buffer ordering and bounds") {
    QueueBuffer qb(1, 2);
    const PipeConfig cfg = pipe(16, 2, 1);
    qb.push(initial_worker_state(cfg, 0, 0));
    try {
      qb.push(initial_worker_state(cfg, 0, 0));
      FAIL("expected a progress error");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::progress);
    }
    qb.push(initial_worker_state(cfg, 0, 1));
    try {
      qb.push(initial_worker_state(cfg, 1, 0));
      FAIL("expected a state error");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::state);
    }
    CHECK(qb.contains(0, 1));
    CHECK(qb.take(0, 0).has_value());
    CHECK_FALSE(qb.take(0, 0).has_value());
    CHECK(qb.drain_for_checkpoint(-1).size() == 1);
    CHECK(qb.drain_for_checkpoint(0).empty());
  }

  TEST_CASE("loader rejects out-of-order requests") {
    auto data = std::make_shared<const Dataset>(Dataset::synthetic(1, 64));
    const PipeConfig cfg = pipe(64, 2, 4);
    DataLoader loader(data, cfg, 2);
    QueueBuffer qb(cfg.prefetch_depth, cfg.total_p);
    loader.prefetch(qb, 0);
    CHECK_THROWS_AS(loader.next_batch(qb, 1, 0), Error);
    loader.next_batch(qb, 0, 0);
    CHECK_THROWS_AS(loader.next_batch(qb, 0, 0), Error);
  }
}
