// Copyright 2026 The estrain Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "estrain/reduce.hpp"
#include "estrain/rng.hpp"

namespace estrain {

inline constexpr std::size_t kInputDim = 8;
inline constexpr std::size_t kHiddenDim = 16;
inline constexpr std::size_t kParamCount = kInputDim * kHiddenDim + kHiddenDim + kHiddenDim + 1;

static_assert(kParamCount == 161);

struct Sample {
  std::array<double, kInputDim> x{};
  double y = 0.0;

  friend bool operator==(const Sample&, const Sample&) = default;
};

using MicroBatch = std::vector<Sample>;

/// y = w2 . dropout(tanh(W1^T x + b1)) + b2 with flat parameter storage in
/// the order w1 (row-major, input-major), b1, w2, b2. The flat order is the
/// "layer order" that bucketing and the optimizer walk.
struct ToyModel {
  std::array<double, kParamCount> params{};

  static constexpr std::size_t w1_index(std::size_t in, std::size_t hidden) noexcept {
    return in * kHiddenDim + hidden;
  }
  static constexpr std::size_t b1_index(std::size_t hidden) noexcept {
    return kInputDim * kHiddenDim + hidden;
  }
  static constexpr std::size_t w2_index(std::size_t hidden) noexcept {
    return kInputDim * kHiddenDim + kHiddenDim + hidden;
  }
  static constexpr std::size_t b2_index() noexcept { return kParamCount - 1; }

  /// Uniform(-0.5, 0.5) weights scaled by 1/sqrt(fan_in), zero biases.
  static ToyModel initialize(std::uint64_t seed);

  friend bool operator==(const ToyModel&, const ToyModel&) = default;
};

struct OptState {
  double lr = 0.05;
  double momentum = 0.9;
  std::vector<double> velocity = std::vector<double>(kParamCount, 0.0);

  friend bool operator==(const OptState&, const OptState&) = default;
};

/// Running statistic that, like BatchNorm's running mean, folds in the
/// worker's rank.
struct TrackedStat {
  double running_mean = 0.0;
  std::uint64_t update_count = 0;

  friend bool operator==(const TrackedStat&, const TrackedStat&) = default;
};

/// Everything one logical training worker owns between mini-batches.
struct EstContext {
  std::uint32_t virtual_rank = 0;
  Rng64 dropout_rng;
  TrackedStat stat;
  std::vector<double> pending_grads;  // empty outside an in-flight mini-batch
  std::uint64_t minibatch_idx = 0;

  friend bool operator==(const EstContext&, const EstContext&) = default;
};

struct ForwardOptions {
  double dropout_rate = 0.5;
};

struct ForwardResult {
  double loss = 0.0;
  std::vector<double> grads;
  EstContext ctx;
  double batch_mean = 0.0;  // mean hidden pre-activation, fed into the tracked stat
};

/// Loss and analytic gradients for one micro-batch. Every sum over batch
/// rows, inputs, or hidden units goes through reduce_sum(variant).
ForwardResult forward_backward(const ToyModel& model, std::span<const Sample> batch, EstContext ctx,
                               ReduceVariant variant, ForwardOptions options = {});

/// Loss only, with a fixed dropout mask (1 keeps a unit, 0 drops it), used
/// by gradient checks.
double forward_loss(const ToyModel& model, std::span<const Sample> batch,
                    std::span<const double> mask, double dropout_rate, ReduceVariant variant);

struct SgdResult {
  ToyModel model;
  OptState opt;
};

/// v <- mu*v + g; p <- p - lr*v in ascending parameter order.
SgdResult sgd_step(const ToyModel& model, const OptState& opt, std::span<const double> grads);

}  // namespace estrain
