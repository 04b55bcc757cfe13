// Copyright 2026 The estrain Authors
// SPDX-License-Identifier: Apache-2.0

#include "estrain/reduce.hpp"

#include <algorithm>
#include <charconv>
#include <vector>

#include "estrain/error.hpp"

namespace estrain {

ReduceVariant ReduceVariant::tree(std::uint32_t fanin) {
  if (fanin < 2) {
    throw Error(Errc::config, "tree reduction needs fanin >= 2, got " + std::to_string(fanin));
  }
  return {Kind::tree, fanin};
}

std::string ReduceVariant::to_string() const {
  return is_sequential() ? std::string("Sequential") : "Tree(" + std::to_string(fanin) + ")";
}

namespace {

double fold_left(std::span<const double> values) {
  double acc = 0.0;
  for (double v : values) acc = acc + v;
  return acc;
}

}  // namespace

double reduce_sum(std::span<const double> values, ReduceVariant variant) {
  if (variant.is_sequential() || values.size() <= 1) {
    return fold_left(values);
  }
  std::vector<double> level(values.begin(), values.end());
  std::vector<double> next;
  while (level.size() > 1) {
    next.clear();
    for (std::size_t i = 0; i < level.size(); i += variant.fanin) {
      const std::size_t n = std::min<std::size_t>(variant.fanin, level.size() - i);
      next.push_back(fold_left(std::span<const double>(level).subspan(i, n)));
    }
    level.swap(next);
  }
  return level.front();
}

KernelProfile kernel_profile_for(const std::string& device_kind) {
  struct Known {
    const char* name;
    std::uint32_t fanin;
  };
  static constexpr Known kKnown[] = {{"v100", 4}, {"p100", 2}, {"t4", 3}, {"a100", 5}};
  for (const auto& k : kKnown) {
    if (device_kind == k.name) return {device_kind, ReduceVariant::tree(k.fanin)};
  }
  if (const auto colon = device_kind.find(':'); colon != std::string::npos) {
    std::uint32_t fanin = 0;
    const char* first = device_kind.data() + colon + 1;
    const char* last = device_kind.data() + device_kind.size();
    auto [ptr, ec] = std::from_chars(first, last, fanin);
    if (ec == std::errc() && ptr == last) return {device_kind, ReduceVariant::tree(fanin)};
  }
  throw Error(Errc::config, "unknown device kind '" + device_kind + "'");
}

}  // namespace estrain
