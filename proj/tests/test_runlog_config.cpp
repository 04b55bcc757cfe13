// Copyright 2026 The estrain Authors
// SPDX-License-Identifier: Apache-2.0

#include <bit>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "doctest.h"
#include "estrain/config.hpp"
#include "estrain/error.hpp"
#include "estrain/runlog.hpp"

using namespace estrain;

namespace {

std::span<const std::uint8_t> bytes(const std::string& s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

RunLog synthetic_log(std::uint64_t steps) {
  RunLog log;
  log.max_p = 2;
  log.mode = "d1d2";
  for (std::uint64_t s = 0; s < steps; ++s) {
    StepRecord r;
    r.step = s;
    r.losses = {0.5 / (s + 1), 0.25 / (s + 1)};
    r.param_hash = 1000 + s;
    if (s % 4 == 3) r.params = std::vector<double>(kParamCount, static_cast<double>(s));
    log.records.push_back(r);
  }
  return log;
}

}  // namespace

TEST_SUITE("runlog") {
  TEST_CASE("fnv-1a 64 reference vectors") {
    CHECK(fnv1a64(bytes("")) == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64(bytes("a")) == 0xaf63dc4c8601ec8cULL);
    CHECK(fnv1a64(bytes("foobar")) == 0x85944171f73967e8ULL);
  }

  TEST_CASE("hex encoding round-trips every bit pattern") {
    const double specials[] = {0.0, -0.0, 1.0, -2.5, std::numeric_limits<double>::denorm_min(),
                               std::numeric_limits<double>::max(), std::numeric_limits<double>::infinity(),
                               std::bit_cast<double>(0x7ff8dead0000beefULL), 0.1};
    for (double v : specials) {
      CHECK(std::bit_cast<std::uint64_t>(parse_hex_f64(hex_f64(v))) == std::bit_cast<std::uint64_t>(v));
    }
    CHECK(hex_f64(1.0) == "3ff0000000000000");
    CHECK_THROWS_AS(parse_hex_f64("3ff"), Error);
    CHECK_THROWS_AS(parse_hex_f64("3ff000000000000g"), Error);
  }

  TEST_CASE("parameter hash covers every byte") {
    ToyModel m = ToyModel::initialize(1);
    const auto h = hash_params(m);
    m.params[160] = std::nextafter(m.params[160], 1.0);
    CHECK(hash_params(m) != h);
    m.params[160] = std::nextafter(m.params[160], -1.0);
    CHECK(hash_params(m) == h);
  }

  TEST_CASE("text form round-trips") {
    const RunLog log = synthetic_log(10);
    const std::string text = log.to_text();
    CHECK(RunLog::parse(text) == log);
    CHECK(RunLog::parse(text).to_text() == text);
  }

  TEST_CASE("first divergence is located by step, field and EST") {
    const RunLog a = synthetic_log(12);
    CHECK_FALSE(first_divergence(a, a).has_value());
    RunLog b = a;
    b.records[7].losses[1] = std::nextafter(b.records[7].losses[1], 1.0);
    b.records[9].param_hash = 0;
    auto d = first_divergence(a, b);
    REQUIRE(d.has_value());
    CHECK(d->step == 7);
    CHECK(d->field == "loss");
    CHECK(d->est == 1u);
    CHECK(describe(*d) == "DIVERGED step=7 field=loss est=1");

    RunLog c = a;
    c.records[7].param_hash ^= 1;
    d = first_divergence(a, c);
    REQUIRE(d.has_value());
    CHECK(d->field == "param_hash");

    RunLog e = a;
    (*e.records[7].params)[42] = -1.0;
    d = first_divergence(a, e);
    REQUIRE(d.has_value());
    CHECK(d->field == "params");
    CHECK(d->param_index == 42u);

    RunLog shorter = a;
    shorter.records.resize(5);
    d = first_divergence(a, shorter);
    REQUIRE(d.has_value());
    CHECK(d->field == "length");
    CHECK(d->step == 5);

    RunLog other = a;
    other.max_p = 4;
    try {
      first_divergence(a, other);
      FAIL("expected usage error");
    } catch (const Error& err) {
      CHECK(err.code() == Errc::usage);
    }
  }

  TEST_CASE("malformed logs report where they broke") {
    CHECK_THROWS_AS(RunLog::parse(""), FormatError);
    CHECK_THROWS_AS(RunLog::parse("{\"step\":0}\n"), FormatError);
    const std::string head = synthetic_log(0).to_text();
    try {
      RunLog::parse(head + "{not json\n");
      FAIL("expected format error");
    } catch (const FormatError& e) {
      CHECK(e.offset() == head.size());
    }
  }
}

TEST_SUITE("config") {
  TEST_CASE("pool document") {
    const ClusterSpec c = parse_cluster(R"({
      "device_types": [
        {"name": "v100", "count": 2, "memory_mu": 2, "interference": [1.0, 0.8], "capability": {"a": 2.0}},
        {"name": "t4", "count": 1, "capability": {"a": 1.0, "b": 0.5}}],
      "workloads": {"a": {"mu_per_executor": 2}},
      "preemptions": [{"time_s": 5, "device_type": "t4", "count": 1, "duration_s": 9}],
      "scheduler": {"round_s": 15, "proposals_k": 2}})");
    REQUIRE(c.pool.types.size() == 2);
    CHECK(c.pool.types[0].interference_at(2) == 0.8);
    CHECK(c.pool.types[1].memory_mu == 1);
    CHECK(c.workloads.at("a").capability == std::vector<double>{2.0, 1.0});
    CHECK(c.workloads.at("a").mu_per_executor == 2);
    CHECK(c.workloads.at("b").capability == std::vector<double>{0.0, 0.5});
    CHECK(c.preemptions.size() == 1);
    CHECK(c.params.round_s == 15.0);
    CHECK(c.params.proposals_k == 2);
    CHECK(c.params.restore_timeout_s == 300.0);

    const WorkloadProfile p = parse_profile(R"({"workload": "a", "capability": {"t4": 1.5}})", c);
    CHECK(p.capability == std::vector<double>{2.0, 1.5});
    CHECK_THROWS_AS(parse_profile(R"({"capability": {"h100": 1}})", c), Error);
  }

  TEST_CASE("pool errors") {
    CHECK_THROWS_AS(parse_cluster("{"), FormatError);
    CHECK_THROWS_AS(parse_cluster(R"({"device_types": [{"name": "x"}]})"), Error);
    CHECK_THROWS_AS(parse_cluster(R"({"device_types": [{"name": "x", "count": 1, "interference": [0.5]}]})"),
                    Error);
    CHECK_THROWS_AS(
        parse_cluster(R"({"device_types": [{"name": "x", "count": 1}],
                          "preemptions": [{"time_s": 1, "device_type": "y", "count": 1, "duration_s": 1}]})"),
        Error);
  }

  TEST_CASE("trace csv") {
    const auto jobs = parse_trace(
        "job_id,arrival_s,minP,maxP,total_minibatches,workload_key,determinism\n"
        "1,0,0,4,100,resnet,d1d2\r\n"
        "2,12.5,1,2,50,bert,d1\n");
    REQUIRE(jobs.size() == 2);
    CHECK(jobs[1].arrival_s == 12.5);
    CHECK(jobs[1].min_p == 1);
    CHECK(jobs[1].workload_key == "bert");
    CHECK_FALSE(jobs[1].determinism.d2);
    CHECK_THROWS_AS(parse_trace("id,arrival\n"), FormatError);
    CHECK_THROWS_AS(parse_trace(""), FormatError);
    const std::string header = "job_id,arrival_s,minP,maxP,total_minibatches,workload_key,determinism\n";
    CHECK_THROWS_AS(parse_trace(header + "1,0,0,4,100,resnet\n"), FormatError);
    CHECK_THROWS_AS(parse_trace(header + "1,x,0,4,100,resnet,d1\n"), FormatError);
    CHECK_THROWS_AS(parse_trace(header + "1,0,0,4,100,resnet,d3\n"), FormatError);
    CHECK_THROWS_AS(parse_trace(header + "1,0,5,4,100,resnet,d1\n"), Error);
    CHECK_THROWS_AS(parse_trace(header + "1,0,0,4,0,resnet,d1\n"), Error);
  }

  TEST_CASE("training and matrix documents") {
    const RunConfig rc = parse_run_config(R"({
      "job": {"seed": 9, "max_p": 4, "micro_batch": 4},
      "determinism": "d1",
      "dump_every": 5,
      "stages": [{"steps": 3, "layout": [{"device": "v100", "threads": 1, "count": 4}]},
                 {"steps": 2, "workers": 3, "layout": [{"device": "t4", "threads": 4}]}]})");
    CHECK(rc.job.seed == 9);
    CHECK(rc.mode == DeterminismMode{true, true, false});
    CHECK(rc.stages[0].layout.size() == 4);
    CHECK(rc.stages[1].workers == 3);
    CHECK(rc.total_steps() == 5);
    CHECK_THROWS_AS(parse_run_config(R"({"stages": []})"), Error);
    CHECK_THROWS_AS(parse_run_config(R"({"determinism": "d9", "stages": []})"), Error);

    const auto ladder = parse_matrix(R"({"job": {"max_p": 4}, "steps": 20})");
    REQUIRE(ladder.size() == 5);
    CHECK(ladder[0].level == "S1");
    CHECK(ladder[4].level == "S5");
    CHECK(ladder[3].b.total_steps() == 20);
    CHECK_THROWS_AS(parse_matrix(R"({"job": {"max_p": 4}, "scenarios": [{"level": "S9", "a": {"stages": []},
                                    "b": {"stages": []}}]})"),
                    Error);
  }
}
