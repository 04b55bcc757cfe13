// Copyright 2026 The estrain Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <limits>
#include <memory>
#include <numeric>
#include <set>

#include "estrain/cluster.hpp"
#include "estrain/error.hpp"

namespace estrain {

SimMode parse_sim_mode(const std::string& text) {
  if (text == "yarn") return SimMode::yarn_cs;
  if (text == "homo") return SimMode::elastic_homo;
  if (text == "heter") return SimMode::elastic_heter;
  throw Error(Errc::usage, "unknown simulation mode '" + text + "' (expected yarn, homo or heter)");
}

std::string to_string(SimMode mode) {
  switch (mode) {
    case SimMode::yarn_cs: return "yarn";
    case SimMode::elastic_homo: return "homo";
    case SimMode::elastic_heter: return "heter";
  }
  return "?";
}

void TraceJob::validate() const {
  if (min_p > max_p) throw Error(Errc::config, "job " + std::to_string(job_id) + ": minP > maxP");
  if (max_p == 0) throw Error(Errc::config, "job " + std::to_string(job_id) + ": maxP must be positive");
  if (total_minibatches == 0) throw Error(Errc::config, "job " + std::to_string(job_id) + ": no mini-batches");
  if (!std::isfinite(arrival_s) || arrival_s < 0) {
    throw Error(Errc::config, "job " + std::to_string(job_id) + ": bad arrival time");
  }
}

void ClusterSpec::validate() const {
  pool.validate();
  for (const auto& [key, profile] : workloads) {
    if (profile.capability.size() != pool.size()) {
      throw Error(Errc::config, "workload '" + key + "' capability does not cover the pool");
    }
  }
  for (const auto& e : preemptions) {
    auto it = std::find_if(pool.types.begin(), pool.types.end(),
                           [&](const DeviceType& d) { return d.name == e.device_type; });
    if (it == pool.types.end()) throw Error(Errc::config, "preemption names unknown type " + e.device_type);
    if (e.time_s < 0 || e.duration_s < 0) throw Error(Errc::config, "preemption with negative time");
  }
  if (!(params.round_s > 0)) throw Error(Errc::config, "scheduling round must be positive");
}

namespace {

constexpr int kFree = -1;
constexpr int kServing = -2;
constexpr double kNever = std::numeric_limits<double>::infinity();

struct Gpu {
  std::size_t type = 0;
  int owner = kFree;
  int reserved_for = -1;
};

enum class JobState { pending, running, waiting, done, rejected };

struct Job {
  TraceJob spec;
  JobState state = JobState::pending;
  bool arrived = false;
  std::vector<std::size_t> gpus;
  std::vector<std::size_t> lost;
  double restore_deadline = kNever;
  bool has_plan = false;
  double rate = 0.0;
  double anchor_t = 0.0;
  double remaining = 0.0;
  double stall_until = 0.0;
  JobMetrics metrics;
};

struct ServingHold {
  double release_s = 0.0;
  std::vector<std::size_t> gpus;
};

class Simulation {
 public:
  Simulation(std::span<const TraceJob> trace, const ClusterSpec& cluster, SimMode mode)
      : cluster_(cluster), mode_(mode) {
    for (std::size_t i = 0; i < cluster.pool.size(); ++i) {
      for (std::uint32_t k = 0; k < cluster.pool.types[i].count; ++k) gpus_.push_back({i});
    }
    std::set<std::uint32_t> ids;
    for (const auto& t : trace) {
      t.validate();
      if (!ids.insert(t.job_id).second) throw Error(Errc::config, "duplicate job id " + std::to_string(t.job_id));
      if (cluster.workloads.count(t.workload_key) == 0) {
        throw Error(Errc::config, "job " + std::to_string(t.job_id) + ": unknown workload '" + t.workload_key + "'");
      }
      Job j;
      j.spec = t;
      j.remaining = static_cast<double>(t.total_minibatches);
      j.metrics.job_id = t.job_id;
      j.metrics.arrival_s = t.arrival_s;
      jobs_.push_back(std::move(j));
    }
    PlanOptions po{cluster.params.waste_threshold};
    for (const auto& [key, profile] : cluster.workloads) {
      caches_.emplace(key, std::make_unique<PlanCache>(cluster.pool, profile, po));
    }
    preempt_order_.resize(cluster.preemptions.size());
    std::iota(preempt_order_.begin(), preempt_order_.end(), std::size_t{0});
    std::stable_sort(preempt_order_.begin(), preempt_order_.end(), [&](std::size_t a, std::size_t b) {
      return cluster.preemptions[a].time_s < cluster.preemptions[b].time_s;
    });
  }

  SimMetrics run();

 private:
  std::uint32_t need(const Job& j) const { return std::max<std::uint32_t>(j.spec.min_p, 1); }

  std::vector<std::uint32_t> held_counts(const Job& j) const {
    std::vector<std::uint32_t> c(cluster_.pool.size(), 0);
    for (auto g : j.gpus) ++c[gpus_[g].type];
    return c;
  }

  std::vector<std::uint32_t> free_counts() const {
    std::vector<std::uint32_t> c(cluster_.pool.size(), 0);
    for (const auto& g : gpus_) {
      if (g.owner == kFree && g.reserved_for < 0) ++c[g.type];
    }
    return c;
  }

  std::uint32_t allocated() const {
    std::uint32_t n = 0;
    for (const auto& g : gpus_) n += g.owner >= 0 ? 1 : 0;
    return n;
  }

  double finish_time(const Job& j) const {
    if (j.state != JobState::running || !j.has_plan || !(j.rate > 0)) return kNever;
    return std::max(j.anchor_t, j.stall_until) + j.remaining / j.rate;
  }

  // Folds progress up to t into `remaining`.
  void anchor(Job& j, double t) {
    if (j.state == JobState::running && j.has_plan) {
      const double from = std::max(j.anchor_t, j.stall_until);
      if (t > from) j.remaining = std::max(0.0, j.remaining - j.rate * (t - from));
    }
    j.anchor_t = t;
  }

  void give(Job& j, std::size_t type, std::uint32_t n) {
    const int owner = static_cast<int>(&j - jobs_.data());
    for (std::size_t g = 0; g < gpus_.size() && n > 0; ++g) {
      if (gpus_[g].type == type && gpus_[g].owner == kFree && gpus_[g].reserved_for < 0) {
        gpus_[g].owner = owner;
        j.gpus.push_back(g);
        --n;
      }
    }
    std::sort(j.gpus.begin(), j.gpus.end());
  }

  void release_all(Job& j) {
    for (auto g : j.gpus) gpus_[g].owner = kFree;
    j.gpus.clear();
    for (auto g : j.lost) {
      if (gpus_[g].reserved_for == static_cast<int>(&j - jobs_.data())) gpus_[g].reserved_for = -1;
    }
    j.lost.clear();
  }

  void set_plan(Job& j, double t) {
    const auto& plan = caches_.at(j.spec.workload_key)->best({j.spec.min_p, j.spec.max_p}, held_counts(j));
    const bool resumed = j.remaining < static_cast<double>(j.spec.total_minibatches);
    anchor(j, t);
    if (j.has_plan || resumed) {
      j.stall_until = t + cluster_.params.reconfig_cost_s;
      ++j.metrics.reconfigurations;
    }
    log(t, j, j.has_plan ? "reconfigure" : resumed ? "resume" : "start");
    if (j.metrics.start_s < 0) j.metrics.start_s = t;
    j.has_plan = plan.has_value();
    j.rate = plan ? plan->perf : 0.0;
    j.state = JobState::running;
  }

  void suspend(Job& j, double t) {
    anchor(j, t);
    release_all(j);
    j.has_plan = false;
    j.rate = 0.0;
    j.restore_deadline = kNever;
    j.state = JobState::pending;
    ++j.metrics.suspensions;
    log(t, j, "suspend");
    if (mode_ == SimMode::yarn_cs) fifo_.push_front(static_cast<std::size_t>(&j - jobs_.data()));
  }

  void complete(Job& j, double t) {
    j.remaining = 0.0;
    j.state = JobState::done;
    j.metrics.finish_s = t;
    j.metrics.jct_s = t - j.spec.arrival_s;
    release_all(j);
    log(t, j, "finish");
  }

  void log(double t, const Job& j, const char* kind) { events_.push_back({t, j.spec.job_id, kind}); }

  void start_preemption(const PreemptionEvent& e, double t);
  void end_preemption(ServingHold& hold, double t);
  void restore_timeout(Job& j, double t);
  void admit(Job& j, SimMetrics& out);
  bool schedule_yarn(double t);
  bool schedule_elastic(double t, bool round);

  const ClusterSpec& cluster_;
  SimMode mode_;
  std::vector<Gpu> gpus_;
  std::vector<Job> jobs_;
  std::map<std::string, std::unique_ptr<PlanCache>> caches_;
  std::vector<std::size_t> preempt_order_;
  std::size_t next_preempt_ = 0;
  std::vector<ServingHold> holds_;
  std::deque<std::size_t> fifo_;
  std::vector<SimEvent> events_;
};

void Simulation::start_preemption(const PreemptionEvent& e, double t) {
  std::size_t type = 0;
  while (cluster_.pool.types[type].name != e.device_type) ++type;
  ServingHold hold;
  hold.release_s = t + e.duration_s;
  std::uint32_t n = e.count;
  // Idle GPUs first, then the most recently submitted job's GPUs.
  for (std::size_t g = 0; g < gpus_.size() && n > 0; ++g) {
    if (gpus_[g].type == type && gpus_[g].owner == kFree && gpus_[g].reserved_for < 0) {
      gpus_[g].owner = kServing;
      hold.gpus.push_back(g);
      --n;
    }
  }
  std::vector<std::size_t> victims;
  for (std::size_t j = 0; j < jobs_.size(); ++j) {
    if (!jobs_[j].gpus.empty()) victims.push_back(j);
  }
  std::sort(victims.begin(), victims.end(),
            [&](std::size_t a, std::size_t b) { return jobs_[a].spec.job_id > jobs_[b].spec.job_id; });
  for (std::size_t v : victims) {
    if (n == 0) break;
    Job& j = jobs_[v];
    bool hit = false;
    for (auto it = j.gpus.rbegin(); it != j.gpus.rend() && n > 0; ++it) {
      if (gpus_[*it].type != type) continue;
      gpus_[*it].owner = kServing;
      gpus_[*it].reserved_for = static_cast<int>(v);
      hold.gpus.push_back(*it);
      j.lost.push_back(*it);
      hit = true;
      --n;
    }
    if (!hit) continue;
    std::erase_if(j.gpus, [&](std::size_t g) { return gpus_[g].owner == kServing; });
    ++j.metrics.preemptions;
    log(t, j, "preempt");
    if (j.state == JobState::running) {
      anchor(j, t);
      j.state = JobState::waiting;
      j.restore_deadline = t + cluster_.params.restore_timeout_s;
    }
  }
  holds_.push_back(std::move(hold));
}

void Simulation::end_preemption(ServingHold& hold, double t) {
  for (auto g : hold.gpus) {
    const int j = gpus_[g].reserved_for;
    gpus_[g].reserved_for = -1;
    if (j >= 0 && jobs_[j].state == JobState::waiting) {
      Job& job = jobs_[j];
      gpus_[g].owner = j;
      job.gpus.push_back(g);
      std::erase(job.lost, g);
      if (job.lost.empty()) {
        std::sort(job.gpus.begin(), job.gpus.end());
        job.anchor_t = t;
        job.state = JobState::running;
        job.restore_deadline = kNever;
        log(t, job, "restore");
      }
    } else {
      gpus_[g].owner = kFree;
    }
  }
  hold.gpus.clear();
  hold.release_s = kNever;
}

void Simulation::restore_timeout(Job& j, double t) {
  for (auto g : j.lost) {
    if (gpus_[g].reserved_for == static_cast<int>(&j - jobs_.data())) gpus_[g].reserved_for = -1;
  }
  j.lost.clear();
  j.restore_deadline = kNever;
  if (mode_ == SimMode::yarn_cs || j.gpus.size() < need(j)) {
    suspend(j, t);
    return;
  }
  j.state = JobState::running;
  j.anchor_t = t;
  set_plan(j, t);
}

void Simulation::admit(Job& j, SimMetrics& out) {
  j.arrived = true;
  if (mode_ != SimMode::yarn_cs) return;
  std::uint32_t largest = 0;
  for (const auto& d : cluster_.pool.types) largest = std::max(largest, d.count);
  if (j.spec.max_p > largest) {
    j.state = JobState::rejected;
    j.metrics.rejected = true;
    log(j.spec.arrival_s, j, "reject");
    out.diagnostics.push_back("job " + std::to_string(j.spec.job_id) + " rejected: maxP " +
                              std::to_string(j.spec.max_p) + " exceeds every device type's GPU count");
    return;
  }
  fifo_.push_back(static_cast<std::size_t>(&j - jobs_.data()));
}

bool Simulation::schedule_yarn(double t) {
  bool changed = false;
  while (!fifo_.empty()) {
    Job& j = jobs_[fifo_.front()];
    const auto free = free_counts();
    const auto& profile = cluster_.workloads.at(j.spec.workload_key);
    std::optional<PlanConfig> plan;
    std::size_t type = 0;
    for (; type < free.size() && !plan; ++type) {
      if (free[type] < j.spec.max_p) continue;
      std::vector<std::uint32_t> nums(free.size(), 0), ones(free.size(), 0);
      nums[type] = j.spec.max_p;
      ones[type] = 1;
      plan = evaluate_config(cluster_.pool, profile, {j.spec.min_p, j.spec.max_p}, nums, ones, ones,
                             {cluster_.params.waste_threshold});
    }
    if (!plan) break;
    give(j, type - 1, j.spec.max_p);
    const bool resumed = j.remaining < static_cast<double>(j.spec.total_minibatches);
    anchor(j, t);
    if (resumed) {
      j.stall_until = t + cluster_.params.reconfig_cost_s;
      ++j.metrics.reconfigurations;
    }
    log(t, j, resumed ? "resume" : "start");
    if (j.metrics.start_s < 0) j.metrics.start_s = t;
    j.has_plan = true;
    j.rate = plan->perf;
    j.state = JobState::running;
    fifo_.pop_front();
    changed = true;
  }
  return changed;
}

bool Simulation::schedule_elastic(double t, bool round) {
  std::set<std::size_t> grown;
  for (;;) {
    const auto free = free_counts();
    if (std::accumulate(free.begin(), free.end(), std::uint32_t{0}) == 0) break;
    std::vector<JobProposal> props;
    for (std::size_t idx = 0; idx < jobs_.size(); ++idx) {
      Job& j = jobs_[idx];
      if (!j.arrived || (j.state != JobState::pending && j.state != JobState::running)) continue;
      if (!round && j.has_plan && grown.count(idx) == 0) continue;
      ProposeOptions opt;
      opt.k = cluster_.params.proposals_k;
      opt.homogeneous_only = mode_ == SimMode::elastic_homo || !j.spec.determinism.d2;
      opt.plan.waste_threshold = cluster_.params.waste_threshold;
      opt.cache = caches_.at(j.spec.workload_key).get();
      const auto set = propose(held_counts(j), free, cluster_.pool, opt.cache->profile(),
                               {j.spec.min_p, j.spec.max_p}, opt);
      for (const auto& p : set.proposals) {
        JobProposal jp{j.spec.job_id, p.speedup_per_gpu, std::vector<std::uint32_t>(free.size(), 0)};
        jp.demand[p.device_type] = p.gpu_delta;
        props.push_back(std::move(jp));
      }
    }
    const auto res = schedule(props, free, true);
    if (res.approved.empty()) break;
    for (std::size_t a : res.approved) {
      const auto& p = props[a];
      auto it = std::find_if(jobs_.begin(), jobs_.end(), [&](const Job& j) { return j.spec.job_id == p.job_id; });
      for (std::size_t i = 0; i < p.demand.size(); ++i) {
        if (p.demand[i] > 0) give(*it, i, p.demand[i]);
      }
      grown.insert(static_cast<std::size_t>(it - jobs_.begin()));
    }
  }
  for (std::size_t idx : grown) set_plan(jobs_[idx], t);
  return !grown.empty();
}

SimMetrics Simulation::run() {
  SimMetrics out;
  if (jobs_.empty()) return out;
  double t0 = kNever;
  for (const auto& j : jobs_) t0 = std::min(t0, j.spec.arrival_s);
  double next_tick = t0;
  std::vector<std::size_t> arrival_order(jobs_.size());
  std::iota(arrival_order.begin(), arrival_order.end(), std::size_t{0});
  std::stable_sort(arrival_order.begin(), arrival_order.end(), [&](std::size_t a, std::size_t b) {
    return jobs_[a].spec.arrival_s < jobs_[b].spec.arrival_s;
  });
  std::size_t next_arrival = 0;
  out.timeline.push_back({t0, 0});

  auto unfinished = [&] {
    return std::any_of(jobs_.begin(), jobs_.end(), [](const Job& j) {
      return j.state != JobState::done && j.state != JobState::rejected;
    });
  };

  while (unfinished()) {
    double t = next_tick;
    bool external = false;  // anything other than the round tick pending
    auto consider = [&](double x) {
      if (x < kNever) external = true;
      t = std::min(t, x);
    };
    if (next_arrival < arrival_order.size()) consider(jobs_[arrival_order[next_arrival]].spec.arrival_s);
    if (next_preempt_ < preempt_order_.size()) consider(cluster_.preemptions[preempt_order_[next_preempt_]].time_s);
    for (const auto& h : holds_) consider(h.release_s);
    for (const auto& j : jobs_) {
      consider(finish_time(j));
      consider(j.restore_deadline);
    }
    const bool busy = std::any_of(jobs_.begin(), jobs_.end(), [](const Job& j) {
      return j.state == JobState::running || j.state == JobState::waiting;
    });
    if (!external && !busy && t > t0 && next_tick > t0 + cluster_.params.round_s) {
      // Nothing can change any more: the remaining jobs never fit.
      for (auto& j : jobs_) {
        if (j.state == JobState::pending) {
          j.state = JobState::rejected;
          j.metrics.rejected = true;
          log(t, j, "reject");
          out.diagnostics.push_back("job " + std::to_string(j.spec.job_id) + " can never be scheduled");
        }
      }
      break;
    }

    for (auto& j : jobs_) {
      if (finish_time(j) <= t) complete(j, t);
    }
    for (auto& h : holds_) {
      if (h.release_s <= t) end_preemption(h, t);
    }
    while (next_preempt_ < preempt_order_.size() &&
           cluster_.preemptions[preempt_order_[next_preempt_]].time_s <= t) {
      start_preemption(cluster_.preemptions[preempt_order_[next_preempt_]], t);
      ++next_preempt_;
    }
    for (auto& j : jobs_) {
      if (j.restore_deadline <= t) restore_timeout(j, t);
    }
    while (next_arrival < arrival_order.size() && jobs_[arrival_order[next_arrival]].spec.arrival_s <= t) {
      admit(jobs_[arrival_order[next_arrival]], out);
      ++next_arrival;
    }
    const bool round = t >= next_tick;
    if (round) next_tick += cluster_.params.round_s;
    if (mode_ == SimMode::yarn_cs) {
      schedule_yarn(t);
    } else {
      schedule_elastic(t, round);
    }

    const std::uint32_t alloc = allocated();
    if (alloc != out.timeline.back().gpus_allocated) {
      if (out.timeline.back().time_s == t) {
        out.timeline.back().gpus_allocated = alloc;
      } else {
        out.timeline.push_back({t, alloc});
      }
    }
  }

  double sum_jct = 0.0;
  std::uint32_t done = 0;
  double last = t0;
  for (const auto& j : jobs_) {
    out.jobs.push_back(j.metrics);
    out.preemptions += j.metrics.preemptions;
    out.rejected += j.metrics.rejected ? 1 : 0;
    if (j.state == JobState::done) {
      sum_jct += j.metrics.jct_s;
      ++done;
      last = std::max(last, j.metrics.finish_s);
    }
  }
  out.mean_jct_s = done > 0 ? sum_jct / done : 0.0;
  out.makespan_s = last - t0;
  double area = 0.0;
  for (std::size_t i = 0; i < out.timeline.size(); ++i) {
    const double end = i + 1 < out.timeline.size() ? out.timeline[i + 1].time_s : last;
    if (end > out.timeline[i].time_s) area += out.timeline[i].gpus_allocated * (end - out.timeline[i].time_s);
  }
  out.mean_allocated = out.makespan_s > 0 ? area / out.makespan_s : 0.0;
  out.events = std::move(events_);
  return out;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

SimMetrics simulate(std::span<const TraceJob> trace, const ClusterSpec& cluster, SimMode mode) {
  cluster.validate();
  Simulation sim(trace, cluster, mode);
  return sim.run();
}

std::string SimMetrics::jobs_csv() const {
  std::string s = "job_id,arrival_s,start_s,finish_s,jct_s,reconfigurations,preemptions,suspensions,status\n";
  std::uint32_t reconf = 0, susp = 0;
  for (const auto& j : jobs) {
    const bool done = j.finish_s >= 0;
    s += std::to_string(j.job_id) + "," + fmt(j.arrival_s) + "," + (j.start_s >= 0 ? fmt(j.start_s) : "") + "," +
         (done ? fmt(j.finish_s) : "") + "," + (done ? fmt(j.jct_s) : "") + "," +
         std::to_string(j.reconfigurations) + "," + std::to_string(j.preemptions) + "," +
         std::to_string(j.suspensions) + "," + (j.rejected ? "rejected" : done ? "done" : "unfinished") + "\n";
    reconf += j.reconfigurations;
    susp += j.suspensions;
  }
  s += "summary,,," + fmt(makespan_s) + "," + fmt(mean_jct_s) + "," + std::to_string(reconf) + "," +
       std::to_string(preemptions) + "," + std::to_string(susp) + ",rejected=" + std::to_string(rejected) + "\n";
  return s;
}

std::string SimMetrics::events_csv() const {
  std::string s = "time_s,job_id,event\n";
  for (const auto& e : events) s += fmt(e.time_s) + "," + std::to_string(e.job_id) + "," + e.kind + "\n";
  return s;
}

std::string SimMetrics::timeline_csv() const {
  std::string s = "time_s,gpus_allocated\n";
  for (const auto& p : timeline) s += fmt(p.time_s) + "," + std::to_string(p.gpus_allocated) + "\n";
  return s;
}

std::string SimMetrics::summary_csv() const {
  return "metric,value\nmean_jct_s," + fmt(mean_jct_s) + "\nmakespan_s," + fmt(makespan_s) +
         "\nmean_allocated_gpus," + fmt(mean_allocated) + "\npreemptions," + std::to_string(preemptions) +
         "\nrejected," + std::to_string(rejected) + "\n";
}

}  // namespace estrain
