// Copyright 2026 The estrain Authors
// SPDX-License-Identifier: Apache-2.0

#include "estrain/planner.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <tuple>

#include "estrain/error.hpp"

namespace estrain {

double DeviceType::interference_at(std::uint32_t executors) const {
  if (interference.empty() || executors == 0) return 1.0;
  return interference[std::min<std::size_t>(executors, interference.size()) - 1];
}

std::vector<std::uint32_t> DevicePool::counts() const {
  std::vector<std::uint32_t> out;
  for (const auto& t : types) out.push_back(t.count);
  return out;
}

void DevicePool::validate() const {
  for (const auto& t : types) {
    if (t.interference.empty() || t.interference.front() != 1.0) {
      throw Error(Errc::config, "interference table of " + t.name + " must start at I(1) = 1");
    }
    for (std::size_t m = 1; m < t.interference.size(); ++m) {
      if (!(t.interference[m] > 0.0) || t.interference[m] > t.interference[m - 1]) {
        throw Error(Errc::config, "interference table of " + t.name + " must be positive and non-increasing");
      }
    }
  }
}

WorkloadProfile WorkloadProfile::from_history(std::vector<double> historical, std::uint32_t mu_per_executor) {
  WorkloadProfile p;
  p.capability = historical;
  p.historical = std::move(historical);
  p.mu_per_executor = mu_per_executor;
  return p;
}

WasteResult waste_model(std::span<const std::uint32_t> nums, std::span<const std::uint64_t> cus,
                        std::span<const double> capability, std::uint32_t max_p) {
  if (nums.size() != cus.size() || nums.size() != capability.size()) {
    throw Error(Errc::input, "waste model inputs have different lengths");
  }
  WasteResult r;
  bool any = false;
  for (std::size_t i = 0; i < nums.size(); ++i) {
    r.cu_capacity += static_cast<std::uint64_t>(nums[i]) * cus[i];
    if (nums[i] > 0 && cus[i] > 0) {
      if (!(capability[i] > 0.0)) throw Error(Errc::config, "CUs assigned to a type with no capability");
      any = true;
      r.f_overload = std::max(r.f_overload, static_cast<double>(cus[i]) / capability[i]);
    }
  }
  if (!any) throw Error(Errc::config, "no GPU type is assigned any CU");
  if (r.cu_capacity < max_p) {
    throw Error(Errc::constraint, "CU capacity " + std::to_string(r.cu_capacity) + " below max_p " +
                                      std::to_string(max_p));
  }
  double total = 0.0;
  for (std::size_t i = 0; i < nums.size(); ++i) {
    if (nums[i] == 0) continue;
    const double n = static_cast<double>(nums[i]);
    total = total + n * capability[i];
    r.waste = r.waste + n * (capability[i] - static_cast<double>(cus[i]) / r.f_overload);
  }
  r.waste = r.waste + static_cast<double>(r.cu_capacity - max_p) / r.f_overload;
  r.waste = std::max(r.waste, 0.0);  // rounding can leave -1 ulp on a perfect fit
  r.waste_norm = r.waste / total * 100.0;
  r.perf = total - r.waste;
  return r;
}

MultiExecutor multi_executor_adjust(std::uint32_t executors, double capability, double interference,
                                    std::uint32_t cus_per_executor, std::uint32_t max_executors) {
  if (executors < 1) throw Error(Errc::config, "need at least one executor per GPU");
  if (executors > max_executors) {
    throw Error(Errc::constraint, std::to_string(executors) + " executors exceed the memory-feasible " +
                                      std::to_string(max_executors));
  }
  if (!(interference > 0.0 && interference <= 1.0)) {
    throw Error(Errc::config, "interference factor must lie in (0, 1]");
  }
  return {static_cast<double>(executors) * capability * interference,
          static_cast<std::uint64_t>(executors) * cus_per_executor};
}

std::uint32_t PlanConfig::total_gpus() const {
  std::uint32_t n = 0;
  for (auto v : nums) n += v;
  return n;
}

std::uint32_t max_executors(const DeviceType& type, const WorkloadProfile& profile) {
  if (profile.mu_per_executor == 0) return 0;
  return type.memory_mu / profile.mu_per_executor;
}

std::optional<PlanConfig> evaluate_config(const DevicePool& pool, const WorkloadProfile& profile, JobShape shape,
                                          std::span<const std::uint32_t> nums,
                                          std::span<const std::uint32_t> executors,
                                          std::span<const std::uint32_t> threads, PlanOptions options) {
  const std::size_t types = pool.size();
  if (nums.size() != types || executors.size() != types || threads.size() != types ||
      profile.capability.size() != types) {
    throw Error(Errc::input, "plan arrays do not match the pool");
  }
  std::uint64_t gpus = 0;
  std::vector<std::uint64_t> ma(types, 0);
  std::vector<double> mc(types, 0.0);
  for (std::size_t i = 0; i < types; ++i) {
    if (nums[i] > pool.types[i].count) return std::nullopt;
    gpus += nums[i];
    if (nums[i] == 0) {
      if (executors[i] != 0 || threads[i] != 0) return std::nullopt;
      continue;
    }
    const std::uint32_t cap = max_executors(pool.types[i], profile);
    if (executors[i] < 1 || executors[i] > cap || threads[i] < 1) return std::nullopt;
    if (!(profile.capability[i] > 0.0)) return std::nullopt;
    const MultiExecutor adj = multi_executor_adjust(executors[i], profile.capability[i],
                                                    pool.types[i].interference_at(executors[i]), threads[i], cap);
    mc[i] = adj.capability;
    ma[i] = adj.cus;
  }
  if (gpus < std::max<std::uint32_t>(shape.min_p, 1) || gpus > shape.max_p) return std::nullopt;

  WasteResult w;
  try {
    w = waste_model(nums, ma, mc, shape.max_p);
  } catch (const Error&) {
    return std::nullopt;
  }
  if (!(w.waste_norm <= 100.0 * options.waste_threshold)) return std::nullopt;

  PlanConfig c;
  c.nums.assign(nums.begin(), nums.end());
  c.executors.assign(executors.begin(), executors.end());
  c.threads.assign(threads.begin(), threads.end());
  c.cu_capacity = w.cu_capacity;
  c.f_overload = w.f_overload;
  c.waste = w.waste;
  c.waste_norm = w.waste_norm;
  c.perf = w.perf;
  return c;
}

bool plan_before(const PlanConfig& a, const PlanConfig& b) {
  if (a.perf != b.perf) return a.perf > b.perf;
  const auto ga = a.total_gpus();
  const auto gb = b.total_gpus();
  if (ga != gb) return ga < gb;
  return std::tie(a.nums, a.executors, a.threads) < std::tie(b.nums, b.executors, b.threads);
}

namespace {

struct TypeOption {
  std::uint32_t nums = 0;
  std::uint32_t executors = 0;
  std::uint32_t threads = 0;
};

std::vector<std::vector<TypeOption>> type_options(const DevicePool& pool, const WorkloadProfile& profile,
                                                  JobShape shape) {
  if (profile.capability.size() != pool.size()) {
    throw Error(Errc::input, "profile has " + std::to_string(profile.capability.size()) +
                                 " capabilities for " + std::to_string(pool.size()) + " device types");
  }
  std::vector<std::vector<TypeOption>> out(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) {
    out[i].push_back({});
    if (!(profile.capability[i] > 0.0)) continue;
    const std::uint32_t cap = max_executors(pool.types[i], profile);
    for (std::uint32_t n = 1; n <= pool.types[i].count; ++n) {
      for (std::uint32_t m = 1; m <= cap; ++m) {
        for (std::uint32_t t = 1; m * t <= shape.max_p; ++t) out[i].push_back({n, m, t});
      }
    }
  }
  return out;
}

std::uint64_t combination_count(const std::vector<std::vector<TypeOption>>& options) {
  std::uint64_t total = 1;
  for (const auto& o : options) total *= o.size();
  return total;
}

std::optional<PlanConfig> evaluate_index(std::uint64_t index, const std::vector<std::vector<TypeOption>>& options,
                                         const DevicePool& pool, const WorkloadProfile& profile, JobShape shape,
                                         PlanOptions plan_options) {
  const std::size_t types = options.size();
  std::vector<std::uint32_t> nums(types), executors(types), threads(types);
  for (std::size_t i = 0; i < types; ++i) {
    const TypeOption& o = options[i][index % options[i].size()];
    index /= options[i].size();
    nums[i] = o.nums;
    executors[i] = o.executors;
    threads[i] = o.threads;
  }
  return evaluate_config(pool, profile, shape, nums, executors, threads, plan_options);
}

void check_shape(JobShape shape) {
  if (shape.max_p < 1) throw Error(Errc::config, "max_p must be >= 1");
  if (shape.min_p > shape.max_p) throw Error(Errc::config, "min_p exceeds max_p");
}

}  // namespace

std::vector<PlanConfig> enumerate_configs_serial(const DevicePool& pool, const WorkloadProfile& profile,
                                                 JobShape shape, PlanOptions options) {
  check_shape(shape);
  const auto opts = type_options(pool, profile, shape);
  const std::uint64_t total = combination_count(opts);
  std::vector<PlanConfig> out;
  for (std::uint64_t k = 0; k < total; ++k) {
    if (auto c = evaluate_index(k, opts, pool, profile, shape, options)) out.push_back(std::move(*c));
  }
  std::sort(out.begin(), out.end(), plan_before);
  return out;
}

std::vector<PlanConfig> enumerate_configs(const DevicePool& pool, const WorkloadProfile& profile, JobShape shape,
                                          PlanOptions options) {
  check_shape(shape);
  const auto opts = type_options(pool, profile, shape);
  const auto total = static_cast<std::int64_t>(combination_count(opts));
  std::vector<PlanConfig> out;
#pragma omp parallel
  {
    std::vector<PlanConfig> local;
#pragma omp for schedule(static) nowait
    for (std::int64_t k = 0; k < total; ++k) {
      if (auto c = evaluate_index(static_cast<std::uint64_t>(k), opts, pool, profile, shape, options)) {
        local.push_back(std::move(*c));
      }
    }
#pragma omp critical
    out.insert(out.end(), std::make_move_iterator(local.begin()), std::make_move_iterator(local.end()));
  }
  std::sort(out.begin(), out.end(), plan_before);
  return out;
}

std::vector<PlanConfig> enumerate_configs_fast(const DevicePool& pool, const WorkloadProfile& profile,
                                               JobShape shape, PlanOptions options) {
  check_shape(shape);
  const std::size_t types = pool.size();
  if (profile.capability.size() != types) throw Error(Errc::input, "profile does not match the pool");

  using Key = std::tuple<std::vector<std::uint32_t>, std::vector<std::uint32_t>, std::vector<std::uint32_t>>;
  std::map<Key, PlanConfig> kept;

  // Odometer over nums_i in [0, N_i] and executors in [1, cap_i] for used types.
  std::vector<std::uint32_t> caps(types);
  for (std::size_t i = 0; i < types; ++i) {
    caps[i] = profile.capability[i] > 0.0 ? max_executors(pool.types[i], profile) : 0;
  }
  std::vector<std::uint32_t> nums(types, 0);
  auto next_nums = [&] {
    for (std::size_t i = 0; i < types; ++i) {
      if (caps[i] > 0 && nums[i] < pool.types[i].count) {
        ++nums[i];
        return true;
      }
      nums[i] = 0;
    }
    return false;
  };
  do {
    std::vector<std::size_t> used;
    for (std::size_t i = 0; i < types; ++i) {
      if (nums[i] > 0) used.push_back(i);
    }
    if (used.empty()) continue;
    std::vector<std::uint32_t> execs(types, 0);
    for (auto i : used) execs[i] = 1;
    auto next_execs = [&] {
      for (auto i : used) {
        if (execs[i] < caps[i]) {
          ++execs[i];
          return true;
        }
        execs[i] = 1;
      }
      return false;
    };
    do {
      // Per-thread capability c_i = MC_i / m = C_i * I_i(m).
      std::vector<double> c(types, 0.0);
      double c_max = 0.0;
      double c_min = 0.0;
      for (auto i : used) {
        c[i] = profile.capability[i] * pool.types[i].interference_at(execs[i]);
        c_max = std::max(c_max, c[i]);
        c_min = c_min == 0.0 ? c[i] : std::min(c_min, c[i]);
      }
      const auto k_max = static_cast<std::uint32_t>(std::ceil(shape.max_p * c_max / c_min));
      std::vector<std::uint32_t> threads(types, 0);
      for (std::uint32_t k = 1; k <= k_max; ++k) {
        const double t = static_cast<double>(k) / c_max;
        for (std::uint32_t mask = 0; mask < (1u << used.size()); ++mask) {
          bool ok = true;
          for (std::size_t u = 0; u < used.size(); ++u) {
            const std::size_t i = used[u];
            const double x = t * c[i];
            const double a = (mask >> u & 1u) ? std::ceil(x) : std::floor(x);
            const std::uint32_t limit = shape.max_p / execs[i];
            if (a < 1.0 || a > limit) {
              ok = false;
              break;
            }
            threads[i] = static_cast<std::uint32_t>(a);
          }
          if (!ok) continue;
          auto cfg = evaluate_config(pool, profile, shape, nums, execs, threads, options);
          if (!cfg) continue;
          Key key{cfg->nums, cfg->executors, cfg->threads};
          auto it = kept.find(key);
          if (it == kept.end()) {
            kept.emplace(std::move(key), std::move(*cfg));
          } else if (cfg->waste < it->second.waste) {
            it->second = std::move(*cfg);
          }
        }
      }
    } while (next_execs());
  } while (next_nums());

  std::vector<PlanConfig> out;
  out.reserve(kept.size());
  for (auto& [key, cfg] : kept) out.push_back(std::move(cfg));
  std::sort(out.begin(), out.end(), plan_before);
  return out;
}

std::optional<PlanConfig> best_config(const DevicePool& pool, const WorkloadProfile& profile, JobShape shape,
                                      PlanOptions options) {
  auto all = enumerate_configs(pool, profile, shape, options);
  if (all.empty()) return std::nullopt;
  return std::move(all.front());
}

PlanCache::PlanCache(DevicePool pool, WorkloadProfile profile, PlanOptions options)
    : pool_(std::move(pool)), profile_(std::move(profile)), options_(options) {}

const std::optional<PlanConfig>& PlanCache::best(JobShape shape, std::span<const std::uint32_t> bound) {
  std::vector<std::uint32_t> key{shape.min_p, shape.max_p};
  key.insert(key.end(), bound.begin(), bound.end());
  auto it = memo_.find(key);
  if (it == memo_.end()) {
    DevicePool p = pool_;
    for (std::size_t i = 0; i < p.types.size(); ++i) p.types[i].count = bound[i];
    it = memo_.emplace(std::move(key), best_config(p, profile_, shape, options_)).first;
  }
  return it->second;
}

ProposalSet propose(std::span<const std::uint32_t> grant, std::span<const std::uint32_t> free_gpus,
                    const DevicePool& pool, const WorkloadProfile& profile, JobShape shape,
                    ProposeOptions options) {
  const std::size_t types = pool.size();
  if (grant.size() != types || free_gpus.size() != types) {
    throw Error(Errc::input, "grant/free vectors do not match the pool");
  }
  auto best_under = [&](std::span<const std::uint32_t> bound) -> std::optional<PlanConfig> {
    if (options.cache != nullptr) return options.cache->best(shape, bound);
    DevicePool p = pool;
    for (std::size_t i = 0; i < types; ++i) p.types[i].count = bound[i];
    return best_config(p, profile, shape, options.plan);
  };

  ProposalSet out;
  std::uint32_t granted = 0;
  for (auto g : grant) granted += g;
  if (granted > 0) out.top1 = best_under(grant);
  const double current = out.top1 ? out.top1->perf : 0.0;

  const std::uint32_t need = std::max<std::uint32_t>(shape.min_p, 1);
  const std::uint32_t first_delta = granted < need ? need - granted : 1;
  for (std::size_t i = 0; i < types; ++i) {
    if (options.homogeneous_only) {
      bool other = false;
      for (std::size_t j = 0; j < types; ++j) other = other || (j != i && grant[j] > 0);
      if (other) continue;
    }
    std::vector<std::uint32_t> bound(grant.begin(), grant.end());
    for (std::uint32_t delta = first_delta; delta <= free_gpus[i]; ++delta) {
      bound[i] = grant[i] + delta;
      auto cfg = best_under(bound);
      if (!cfg || !(cfg->perf > current)) continue;
      const double speedup = (cfg->perf - current) / static_cast<double>(delta);
      out.proposals.push_back({std::move(*cfg), speedup, delta, i});
      break;
    }
  }
  std::stable_sort(out.proposals.begin(), out.proposals.end(),
                   [](const Proposal& a, const Proposal& b) { return a.speedup_per_gpu > b.speedup_per_gpu; });
  if (out.proposals.size() > options.k) out.proposals.resize(options.k);
  return out;
}

WorkloadProfile update_profile(const WorkloadProfile& profile, std::span<const RuntimeObservation> stats) {
  WorkloadProfile out = profile;
  for (const auto& obs : stats) {
    if (obs.device_type >= out.capability.size()) throw Error(Errc::input, "observation for unknown device type");
    if (!(obs.minibatches_per_second > 0.0)) continue;
    out.capability[obs.device_type] = 0.5 * out.capability[obs.device_type] + 0.5 * obs.minibatches_per_second;
  }
  return out;
}

FallbackDecision fallback_on_slowdown(MeasuredPerf prev, MeasuredPerf current, FallbackOptions options) {
  if (prev.steps < options.warmup_steps || current.steps < options.warmup_steps) return FallbackDecision::keep;
  return current.rate < prev.rate * (1.0 - options.slack) ? FallbackDecision::revert : FallbackDecision::keep;
}

}  // namespace estrain
