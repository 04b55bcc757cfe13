// Copyright 2026 The estrain Authors
// SPDX-License-Identifier: Apache-2.0

#include "estrain/runlog.hpp"

#include <bit>
#include <charconv>
#include <cstdio>

#include "json.hpp"

#include "estrain/error.hpp"

namespace estrain {

using nlohmann::json;

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (auto b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t hash_params(const ToyModel& model) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(model.params.size() * 8);
  for (double p : model.params) {
    const auto bits = std::bit_cast<std::uint64_t>(p);
    for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
  }
  return fnv1a64(bytes);
}

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t parse_hex64(std::string_view text) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v, 16);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.size() != 16) {
    throw Error(Errc::format, "bad hex word '" + std::string(text) + "'");
  }
  return v;
}

}  // namespace

std::string hex_f64(double v) { return hex64(std::bit_cast<std::uint64_t>(v)); }

double parse_hex_f64(std::string_view text) { return std::bit_cast<double>(parse_hex64(text)); }

std::string RunLog::to_text() const {
  std::string out = json{{"kind", "header"}, {"format", 1}, {"max_p", max_p}, {"param_count", param_count},
                         {"mode", mode}}
                        .dump() +
                    "\n";
  for (const auto& r : records) {
    json j{{"step", r.step}, {"param_hash", hex64(r.param_hash)}};
    json losses = json::array();
    for (double l : r.losses) losses.push_back(hex_f64(l));
    j["losses"] = std::move(losses);
    if (r.params) {
      json ps = json::array();
      for (double p : *r.params) ps.push_back(hex_f64(p));
      j["params"] = std::move(ps);
    }
    out += j.dump() + "\n";
  }
  return out;
}

RunLog RunLog::parse(std::string_view text) {
  RunLog log;
  bool header = false;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    const std::size_t offset = pos;
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;
    try {
      json j = json::parse(line);
      if (!header) {
        if (j.value("kind", "") != "header") throw Error(Errc::format, "first line is not a header");
        log.max_p = j.at("max_p").get<std::uint32_t>();
        log.param_count = j.at("param_count").get<std::uint32_t>();
        log.mode = j.at("mode").get<std::string>();
        header = true;
        continue;
      }
      StepRecord r;
      r.step = j.at("step").get<std::uint64_t>();
      r.param_hash = parse_hex64(j.at("param_hash").get<std::string>());
      for (const auto& l : j.at("losses")) r.losses.push_back(parse_hex_f64(l.get<std::string>()));
      if (j.contains("params")) {
        std::vector<double> ps;
        for (const auto& p : j.at("params")) ps.push_back(parse_hex_f64(p.get<std::string>()));
        r.params = std::move(ps);
      }
      log.records.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw FormatError(offset, "run log line " + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      throw FormatError(offset, "run log line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!header) throw FormatError(0, "run log has no header");
  return log;
}

std::optional<Divergence> first_divergence(const RunLog& a, const RunLog& b) {
  if (a.max_p != b.max_p || a.param_count != b.param_count) {
    throw Error(Errc::usage, "run logs differ in shape (max_p " + std::to_string(a.max_p) + " vs " +
                                 std::to_string(b.max_p) + ")");
  }
  const std::size_t n = std::min(a.records.size(), b.records.size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto& ra = a.records[i];
    const auto& rb = b.records[i];
    if (ra.step != rb.step) return Divergence{std::min(ra.step, rb.step), "step", {}, {}};
    const std::size_t nl = std::max(ra.losses.size(), rb.losses.size());
    for (std::size_t k = 0; k < nl; ++k) {
      if (k >= ra.losses.size() || k >= rb.losses.size() ||
          std::bit_cast<std::uint64_t>(ra.losses[k]) != std::bit_cast<std::uint64_t>(rb.losses[k])) {
        return Divergence{ra.step, "loss", static_cast<std::uint32_t>(k), {}};
      }
    }
    if (ra.param_hash != rb.param_hash) return Divergence{ra.step, "param_hash", {}, {}};
    if (ra.params && rb.params) {
      for (std::size_t k = 0; k < std::min(ra.params->size(), rb.params->size()); ++k) {
        if (std::bit_cast<std::uint64_t>((*ra.params)[k]) != std::bit_cast<std::uint64_t>((*rb.params)[k])) {
          return Divergence{ra.step, "params", {}, static_cast<std::uint32_t>(k)};
        }
      }
    }
  }
  if (a.records.size() != b.records.size()) {
    const auto& longer = a.records.size() > b.records.size() ? a : b;
    return Divergence{longer.records[n].step, "length", {}, {}};
  }
  return std::nullopt;
}

std::string describe(const Divergence& d) {
  std::string s = "DIVERGED step=" + std::to_string(d.step) + " field=" + d.field;
  if (d.est) s += " est=" + std::to_string(*d.est);
  if (d.param_index) s += " param=" + std::to_string(*d.param_index);
  return s;
}

}  // namespace estrain
