// Copyright 2026 The estrain Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <numeric>
#include <set>

#include "estrain/cluster.hpp"
#include "estrain/error.hpp"

namespace estrain {

std::uint32_t JobProposal::gpus() const {
  return std::accumulate(demand.begin(), demand.end(), std::uint32_t{0});
}

std::vector<std::size_t> schedule_order(std::span<const JobProposal> proposals) {
  std::vector<std::size_t> order(proposals.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& pa = proposals[a];
    const auto& pb = proposals[b];
    if (pa.speedup != pb.speedup) return pa.speedup > pb.speedup;
    if (pa.gpus() != pb.gpus()) return pa.gpus() > pb.gpus();
    return pa.job_id < pb.job_id;
  });
  return order;
}

ScheduleResult schedule(std::span<const JobProposal> proposals, std::span<const std::uint32_t> available,
                        bool one_per_job) {
  ScheduleResult out;
  out.remaining.assign(available.begin(), available.end());
  std::set<std::uint32_t> served;
  auto left = [&] { return std::accumulate(out.remaining.begin(), out.remaining.end(), std::uint64_t{0}); };

  for (std::size_t idx : schedule_order(proposals)) {
    if (left() == 0) break;
    const auto& p = proposals[idx];
    if (p.demand.size() != out.remaining.size()) {
      throw Error(Errc::input, "proposal demand does not match the pool");
    }
    bool fits = !(one_per_job && served.count(p.job_id) > 0);
    for (std::size_t i = 0; fits && i < p.demand.size(); ++i) fits = p.demand[i] <= out.remaining[i];
    if (!fits) {
      out.skipped.push_back(idx);
      continue;
    }
    for (std::size_t i = 0; i < p.demand.size(); ++i) out.remaining[i] -= p.demand[i];
    out.approved.push_back(idx);
    served.insert(p.job_id);
  }
  return out;
}

}  // namespace estrain
