// Copyright 2026 The estrain Authors
// SPDX-License-Identifier: Apache-2.0

#include "estrain/config.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "estrain/error.hpp"
#include "json.hpp"

namespace estrain {

using nlohmann::json;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::input, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::input, "cannot write " + path);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error(Errc::input, "short write to " + path);
}

namespace {

json parse_json(std::string_view text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(e.byte, std::string(what) + ": " + e.what());
  }
}

template <typename F>
auto guarded(const char* what, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw Error(Errc::config, std::string(what) + ": " + e.what());
  }
}

JobSpec parse_job(const json& j) {
  JobSpec s;
  if (j.is_null()) return s;
  s.seed = j.value("seed", s.seed);
  s.max_p = j.value("max_p", s.max_p);
  s.micro_batch = j.value("micro_batch", s.micro_batch);
  s.dataset_size = j.value("dataset_size", s.dataset_size);
  s.lr = j.value("lr", s.lr);
  s.momentum = j.value("momentum", s.momentum);
  s.bucket_cap = j.value("bucket_cap", s.bucket_cap);
  s.dropout = j.value("dropout", s.dropout);
  s.jitter = j.value("jitter", s.jitter);
  s.shuffle = j.value("shuffle", s.shuffle);
  s.prefetch_depth = j.value("prefetch_depth", s.prefetch_depth);
  return s;
}

Layout parse_layout(const json& j) {
  Layout layout;
  for (const auto& e : j) {
    const std::uint32_t count = e.value("count", 1u);
    for (std::uint32_t k = 0; k < count; ++k) {
      layout.push_back({e.at("device").get<std::string>(), e.value("threads", 0u)});
    }
  }
  return layout;
}

std::vector<Stage> parse_stages(const json& j) {
  std::vector<Stage> stages;
  for (const auto& s : j) {
    stages.push_back({s.at("steps").get<std::uint64_t>(), parse_layout(s.at("layout")), s.value("workers", 2u)});
  }
  return stages;
}

}  // namespace

ClusterSpec parse_cluster(std::string_view json_text) {
  const json doc = parse_json(json_text, "pool");
  return guarded("pool", [&] {
    ClusterSpec c;
    std::set<std::string> workloads;
    for (const auto& d : doc.at("device_types")) {
      DeviceType t;
      t.name = d.at("name").get<std::string>();
      t.count = d.at("count").get<std::uint32_t>();
      t.memory_mu = d.value("memory_mu", 1u);
      if (d.contains("interference")) t.interference = d.at("interference").get<std::vector<double>>();
      if (d.contains("capability")) {
        for (const auto& [k, v] : d.at("capability").items()) workloads.insert(k);
      }
      c.pool.types.push_back(std::move(t));
    }
    for (const auto& key : workloads) {
      WorkloadProfile p;
      for (const auto& d : doc.at("device_types")) {
        double v = 0.0;
        if (d.contains("capability") && d.at("capability").contains(key)) v = d.at("capability").at(key).get<double>();
        p.capability.push_back(v);
      }
      p.historical = p.capability;
      if (doc.contains("workloads") && doc.at("workloads").contains(key)) {
        p.mu_per_executor = doc.at("workloads").at(key).value("mu_per_executor", 1u);
      }
      c.workloads.emplace(key, std::move(p));
    }
    if (doc.contains("preemptions")) {
      for (const auto& e : doc.at("preemptions")) {
        c.preemptions.push_back({e.at("time_s").get<double>(), e.at("device_type").get<std::string>(),
                                 e.at("count").get<std::uint32_t>(), e.at("duration_s").get<double>()});
      }
    }
    if (doc.contains("scheduler")) {
      const auto& s = doc.at("scheduler");
      c.params.round_s = s.value("round_s", c.params.round_s);
      c.params.restore_timeout_s = s.value("restore_timeout_s", c.params.restore_timeout_s);
      c.params.reconfig_cost_s = s.value("reconfig_cost_s", c.params.reconfig_cost_s);
      c.params.proposals_k = s.value("proposals_k", c.params.proposals_k);
      c.params.waste_threshold = s.value("waste_threshold", c.params.waste_threshold);
    }
    c.validate();
    return c;
  });
}

WorkloadProfile parse_profile(std::string_view json_text, const ClusterSpec& cluster) {
  const json doc = parse_json(json_text, "profile");
  return guarded("profile", [&] {
    WorkloadProfile p;
    p.capability.assign(cluster.pool.size(), 0.0);
    if (doc.contains("workload")) {
      const auto key = doc.at("workload").get<std::string>();
      auto it = cluster.workloads.find(key);
      if (it == cluster.workloads.end()) throw Error(Errc::config, "pool has no capability for workload " + key);
      p = it->second;
    }
    if (doc.contains("capability")) {
      for (const auto& [name, v] : doc.at("capability").items()) {
        std::size_t i = 0;
        while (i < cluster.pool.size() && cluster.pool.types[i].name != name) ++i;
        if (i == cluster.pool.size()) throw Error(Errc::config, "profile names unknown device type " + name);
        p.capability[i] = v.get<double>();
      }
    }
    p.mu_per_executor = doc.value("mu_per_executor", p.mu_per_executor);
    p.historical = p.capability;
    return p;
  });
}

std::vector<TraceJob> parse_trace(std::string_view csv_text) {
  static constexpr std::string_view kHeader = "job_id,arrival_s,minP,maxP,total_minibatches,workload_key,determinism";
  std::vector<TraceJob> jobs;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < csv_text.size()) {
    std::size_t end = csv_text.find('\n', pos);
    if (end == std::string_view::npos) end = csv_text.size();
    std::string_view line = csv_text.substr(pos, end - pos);
    const std::size_t offset = pos;
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (line_no == 1) {
      if (line != kHeader) throw FormatError(0, "trace header must be '" + std::string(kHeader) + "'");
      continue;
    }
    std::vector<std::string_view> cells;
    std::size_t c = 0;
    while (true) {
      const std::size_t comma = line.find(',', c);
      cells.push_back(line.substr(c, comma == std::string_view::npos ? std::string_view::npos : comma - c));
      if (comma == std::string_view::npos) break;
      c = comma + 1;
    }
    auto bad = [&](const std::string& what) {
      return FormatError(offset, "trace line " + std::to_string(line_no) + ": " + what);
    };
    if (cells.size() != 7) throw bad("expected 7 fields");
    auto to_u64 = [&](std::string_view s, const char* name) {
      std::uint64_t v = 0;
      auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || p != s.data() + s.size()) throw bad(std::string("bad ") + name);
      return v;
    };
    TraceJob j;
    j.job_id = static_cast<std::uint32_t>(to_u64(cells[0], "job_id"));
    {
      double v = 0;
      auto [p, ec] = std::from_chars(cells[1].data(), cells[1].data() + cells[1].size(), v);
      if (ec != std::errc() || p != cells[1].data() + cells[1].size()) throw bad("bad arrival_s");
      j.arrival_s = v;
    }
    j.min_p = static_cast<std::uint32_t>(to_u64(cells[2], "minP"));
    j.max_p = static_cast<std::uint32_t>(to_u64(cells[3], "maxP"));
    j.total_minibatches = to_u64(cells[4], "total_minibatches");
    j.workload_key = std::string(cells[5]);
    try {
      j.determinism = DeterminismMode::parse(std::string(cells[6]));
    } catch (const Error& e) {
      throw bad(e.what());
    }
    j.validate();
    jobs.push_back(std::move(j));
  }
  if (line_no == 0) throw FormatError(0, "empty trace");
  return jobs;
}

RunConfig parse_run_config(std::string_view json_text) {
  const json doc = parse_json(json_text, "run config");
  return guarded("run config", [&] {
    RunConfig c;
    c.job = parse_job(doc.value("job", json()));
    if (doc.contains("determinism")) c.mode = DeterminismMode::parse(doc.at("determinism").get<std::string>());
    c.dump_every = doc.value("dump_every", 0u);
    c.stages = parse_stages(doc.at("stages"));
    c.validate();
    return c;
  });
}

std::vector<ReproScenario> parse_matrix(std::string_view json_text) {
  const json doc = parse_json(json_text, "matrix");
  return guarded("matrix", [&] {
    const JobSpec job = parse_job(doc.value("job", json()));
    job.validate();
    if (!doc.contains("scenarios")) return default_matrix(job, doc.value("steps", std::uint64_t{200}));
    std::vector<ReproScenario> out;
    for (const auto& s : doc.at("scenarios")) {
      ReproScenario r;
      r.level = s.at("level").get<std::string>();
      mode_guarantees({}, r.level);  // rejects unknown levels
      r.description = s.value("description", "");
      r.a.job = job;
      r.b.job = job;
      r.a.stages = parse_stages(s.at("a").at("stages"));
      r.b.stages = parse_stages(s.at("b").at("stages"));
      r.a.validate();
      r.b.validate();
      out.push_back(std::move(r));
    }
    return out;
  });
}

}  // namespace estrain
