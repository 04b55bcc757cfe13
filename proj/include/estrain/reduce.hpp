// Copyright 2026 The estrain Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>

namespace estrain {

/// How a kernel combines a list of addends. Sequential is a strict
/// left-to-right fold and is the device-agnostic variant; Tree(fanin) groups
/// consecutive runs of `fanin` values per level, the way a kernel sized to a
/// device's SM count would.
struct ReduceVariant {
  enum class Kind : std::uint8_t { sequential, tree };

  Kind kind = Kind::sequential;
  std::uint32_t fanin = 0;

  static constexpr ReduceVariant sequential() noexcept { return {Kind::sequential, 0}; }
  static ReduceVariant tree(std::uint32_t fanin);

  bool is_sequential() const noexcept { return kind == Kind::sequential; }
  std::string to_string() const;

  friend bool operator==(const ReduceVariant&, const ReduceVariant&) = default;
};

double reduce_sum(std::span<const double> values, ReduceVariant variant);

/// The kernel a device kind would pick natively.
struct KernelProfile {
  std::string device_kind;
  ReduceVariant reduce_variant;

  friend bool operator==(const KernelProfile&, const KernelProfile&) = default;
};

/// Known device kinds: v100 -> Tree(4), p100 -> Tree(2), t4 -> Tree(3),
/// a100 -> Tree(5). A kind of the form "name:f" maps to Tree(f). Unknown
/// kinds are a config error.
KernelProfile kernel_profile_for(const std::string& device_kind);

}  // namespace estrain
