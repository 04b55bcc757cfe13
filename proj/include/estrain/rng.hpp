// Copyright 2026 The estrain Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <utility>

namespace estrain {

/// splitmix64 state. Every random stream in the library (dropout masks,
/// shuffles, augmentation jitter) is one of these, so a stream is fully
/// captured by a single 64-bit word.
struct Rng64 {
  std::uint64_t state = 0;

  friend bool operator==(const Rng64&, const Rng64&) = default;
};

struct RngDraw {
  Rng64 next;
  std::uint64_t value;
};

struct RngUniform {
  Rng64 next;
  double value;
};

constexpr RngDraw splitmix64_next(Rng64 s) noexcept {
  const std::uint64_t advanced = s.state + 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = advanced;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return {Rng64{advanced}, z ^ (z >> 31)};
}

/// Maps a raw draw to [0, 1) using the top 53 bits.
constexpr double uniform01_from_bits(std::uint64_t raw) noexcept {
  return static_cast<double>(raw >> 11) * 0x1.0p-53;
}

constexpr RngUniform rng_uniform01(Rng64 s) noexcept {
  const RngDraw d = splitmix64_next(s);
  return {d.next, uniform01_from_bits(d.value)};
}

// Stream tags keep the seeds of unrelated streams apart.
enum class StreamTag : std::uint64_t {
  init = 0x1,
  dropout = 0x2,
  augment = 0x3,
  dataset = 0x4,
  arrival = 0x5,
};

/// Seed for stream `index` of kind `tag` under the job seed.
std::uint64_t derive_seed(std::uint64_t seed, StreamTag tag, std::uint64_t index) noexcept;

/// Mutable convenience wrapper for code that draws many values in sequence.
class SplitMix {
 public:
  explicit SplitMix(Rng64 s) : s_(s) {}
  explicit SplitMix(std::uint64_t seed) : s_{seed} {}

  std::uint64_t next() noexcept {
    const RngDraw d = splitmix64_next(s_);
    s_ = d.next;
    return d.value;
  }
  double uniform01() noexcept { return uniform01_from_bits(next()); }
  Rng64 state() const noexcept { return s_; }

 private:
  Rng64 s_;
};

}  // namespace estrain
