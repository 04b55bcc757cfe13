// Copyright 2026 The estrain Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "estrain/model.hpp"

namespace estrain {

/// FNV-1a, 64-bit.
std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes);

/// FNV-1a over the little-endian bytes of every parameter.
std::uint64_t hash_params(const ToyModel& model);

/// Exact text form of a binary64: 16 lowercase hex digits of its bits.
std::string hex_f64(double v);
double parse_hex_f64(std::string_view text);

struct StepRecord {
  std::uint64_t step = 0;
  std::vector<double> losses;  // by virtual rank
  std::uint64_t param_hash = 0;
  std::optional<std::vector<double>> params;

  friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

/// One JSON object per line: a header, then one record per mini-batch.
struct RunLog {
  std::uint32_t max_p = 0;
  std::uint32_t param_count = kParamCount;
  std::string mode;
  std::vector<StepRecord> records;

  std::string to_text() const;
  static RunLog parse(std::string_view text);

  friend bool operator==(const RunLog&, const RunLog&) = default;
};

struct Divergence {
  std::uint64_t step = 0;
  std::string field;               // "loss", "param_hash", "params" or "length"
  std::optional<std::uint32_t> est;  // set for loss
  std::optional<std::uint32_t> param_index;  // set for params
};

/// First point at which two logs differ, scanning steps in order and, within
/// a step, losses by rank, then the hash, then dumped parameters.
/// Logs of different max_p or parameter count are a usage error.
std::optional<Divergence> first_divergence(const RunLog& a, const RunLog& b);

std::string describe(const Divergence& d);

}  // namespace estrain
