// Copyright 2026 The estrain Authors
// SPDX-License-Identifier: Apache-2.0

#include <bit>
#include <cmath>
#include <functional>
#include <vector>

#include "doctest.h"
#include "estrain/error.hpp"
#include "estrain/model.hpp"
#include "estrain/reduce.hpp"
#include "estrain/rng.hpp"

using namespace estrain;

namespace {

// Bottom-up f-ary tree written recursively: the value of node k on level L
// folds children f*k .. f*k+f-1 of level L-1 from 0.0, left to right.
double tree_oracle(const std::vector<double>& v, std::size_t f) {
  std::function<std::size_t(std::size_t)> width = [&](std::size_t level) {
    std::size_t w = v.size();
    for (std::size_t l = 0; l < level; ++l) w = (w + f - 1) / f;
    return w;
  };
  std::function<double(std::size_t, std::size_t)> node = [&](std::size_t level, std::size_t k) -> double {
    if (level == 0) return v[k];
    double acc = 0.0;
    for (std::size_t c = f * k; c < std::min(f * k + f, width(level - 1)); ++c) acc += node(level - 1, c);
    return acc;
  };
  if (v.empty()) return 0.0;
  if (v.size() == 1) return 0.0 + v[0];
  std::size_t top = 0;
  while (width(top) > 1) ++top;
  return node(top, 0);
}

bool same_bits(double a, double b) { return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b); }

}  // namespace

TEST_SUITE("detcore") {
  TEST_CASE("splitmix64 reference outputs") {
    SplitMix r(0);
    CHECK(r.next() == 0xE220A8397B1DCDAFULL);
    CHECK(r.next() == 0x6E789E6AA1B965F4ULL);
    static_assert(splitmix64_next(Rng64{0}).value == 0xE220A8397B1DCDAFULL);
  }

  TEST_CASE("uniform01 stream is frozen") {
    SplitMix r(42);
    const double expect[] = {0.7415648787718233, 0.1599103928769201, 0.27860113025513866, 0.34419071652363753,
                             0.03803016854024621};
    for (double e : expect) CHECK(same_bits(r.uniform01(), e));
    CHECK(uniform01_from_bits(~0ULL) < 1.0);
    CHECK(uniform01_from_bits(0) == 0.0);
  }

  TEST_CASE("pure and stateful draws agree") {
    Rng64 s{12345};
    SplitMix r(s);
    for (int i = 0; i < 100; ++i) {
      const RngUniform u = rng_uniform01(s);
      s = u.next;
      CHECK(same_bits(u.value, r.uniform01()));
    }
    CHECK(s == r.state());
  }

  TEST_CASE("derived seeds separate streams") {
    CHECK(derive_seed(1, StreamTag::dropout, 0) != derive_seed(1, StreamTag::dropout, 1));
    CHECK(derive_seed(1, StreamTag::dropout, 0) != derive_seed(1, StreamTag::augment, 0));
    CHECK(derive_seed(1, StreamTag::dropout, 0) != derive_seed(2, StreamTag::dropout, 0));
    CHECK(derive_seed(7, StreamTag::init, 3) == derive_seed(7, StreamTag::init, 3));
  }

  TEST_CASE("sequential is a strict left fold") {
    const std::vector<double> v{0.1, 0.2, 0.3, 1e-17, -0.6};
    double acc = 0.0;
    for (double x : v) acc += x;
    CHECK(same_bits(reduce_sum(v, ReduceVariant::sequential()), acc));
    CHECK(reduce_sum(std::vector<double>{}, ReduceVariant::sequential()) == 0.0);
  }

  TEST_CASE("tree reduction matches the recursive oracle") {
    SplitMix r(99);
    for (std::size_t n = 0; n < 70; ++n) {
      std::vector<double> v(n);
      for (auto& x : v) x = (r.uniform01() - 0.5) * std::ldexp(1.0, static_cast<int>(r.next() % 60) - 30);
      for (std::uint32_t f = 2; f <= 6; ++f) {
        CHECK(same_bits(reduce_sum(v, ReduceVariant::tree(f)), tree_oracle(v, f)));
      }
    }
  }

  TEST_CASE("summation order changes bits on adversarial magnitudes") {
    const std::vector<double> v{1e16, 1.0, -1e16, 1.0};
    CHECK(reduce_sum(v, ReduceVariant::sequential()) == 1.0);
    CHECK(reduce_sum(v, ReduceVariant::tree(2)) == 0.0);
  }

  TEST_CASE("variant naming and validation") {
    CHECK(ReduceVariant::sequential().to_string() == "Sequential");
    CHECK(ReduceVariant::tree(4).to_string() == "Tree(4)");
    CHECK_THROWS_AS(ReduceVariant::tree(1), Error);
    CHECK(kernel_profile_for("v100").reduce_variant == ReduceVariant::tree(4));
    CHECK(kernel_profile_for("p100").reduce_variant == ReduceVariant::tree(2));
    CHECK(kernel_profile_for("t4").reduce_variant == ReduceVariant::tree(3));
    CHECK(kernel_profile_for("a100").reduce_variant == ReduceVariant::tree(5));
    CHECK(kernel_profile_for("mydev:7").reduce_variant == ReduceVariant::tree(7));
    CHECK_THROWS_AS(kernel_profile_for("h100"), Error);
    CHECK_THROWS_AS(kernel_profile_for("x:1"), Error);
  }
}

namespace {

std::vector<Sample> random_batch(SplitMix& r, std::size_t rows) {
  std::vector<Sample> b(rows);
  for (auto& s : b) {
    for (auto& x : s.x) x = r.uniform01() * 2.0 - 1.0;
    s.y = r.uniform01() * 2.0 - 1.0;
  }
  return b;
}

// The dropout rule restated: one draw per (row, hidden) in row-major order,
// kept iff u >= rate.
std::vector<double> dropout_mask(Rng64 s, std::size_t rows, double rate) {
  std::vector<double> m(rows * kHiddenDim, 1.0);
  if (rate == 0.0) return m;
  SplitMix r(s);
  for (auto& k : m) k = r.uniform01() >= rate ? 1.0 : 0.0;
  return m;
}

}  // namespace

TEST_SUITE("model") {
  TEST_CASE("parameter layout") {
    CHECK(kParamCount == 161);
    CHECK(ToyModel::w1_index(0, 0) == 0);
    CHECK(ToyModel::w1_index(7, 15) == 127);
    CHECK(ToyModel::b1_index(0) == 128);
    CHECK(ToyModel::w2_index(0) == 144);
    CHECK(ToyModel::b2_index() == 160);
  }

  TEST_CASE("initialization is seeded and bounded") {
    const ToyModel a = ToyModel::initialize(5);
    CHECK(a == ToyModel::initialize(5));
    CHECK_FALSE(a == ToyModel::initialize(6));
    for (std::size_t j = 0; j < kHiddenDim; ++j) {
      CHECK(a.params[ToyModel::b1_index(j)] == 0.0);
      CHECK(std::abs(a.params[ToyModel::w2_index(j)]) <= 0.5 / 4.0);
    }
    CHECK(a.params[ToyModel::b2_index()] == 0.0);
  }

  TEST_CASE("gradients match central finite differences") {
    // 100 seeded cases, step 1e-5, absolute tolerance 1e-6 per parameter.
    SplitMix r(2024);
    int worst_case = -1;
    double worst = 0.0;
    for (int c = 0; c < 100; ++c) {
      const ToyModel m = ToyModel::initialize(1000 + c);
      const std::size_t rows = 1 + r.next() % 6;
      const auto batch = random_batch(r, rows);
      const double rate = c % 2 == 0 ? 0.5 : 0.0;
      EstContext ctx;
      ctx.dropout_rng = Rng64{r.next()};
      const auto variant = c % 3 == 0 ? ReduceVariant::sequential() : ReduceVariant::tree(2 + c % 4);
      const ForwardResult fb = forward_backward(m, batch, ctx, variant, {rate});
      const auto mask = dropout_mask(ctx.dropout_rng, rows, rate);
      CHECK(same_bits(fb.loss, forward_loss(m, batch, mask, rate, variant)));
      const double h = 1e-5;
      for (std::size_t k = 0; k < kParamCount; ++k) {
        ToyModel plus = m, minus = m;
        plus.params[k] += h;
        minus.params[k] -= h;
        const double fd =
            (forward_loss(plus, batch, mask, rate, variant) - forward_loss(minus, batch, mask, rate, variant)) /
            (2 * h);
        const double err = std::abs(fd - fb.grads[k]);
        if (err > worst) {
          worst = err;
          worst_case = c;
        }
      }
    }
    INFO("worst case " << worst_case);
    CHECK(worst < 1e-6);
  }

  TEST_CASE("dropout keeps about half and advances the stream") {
    SplitMix r(3);
    const auto batch = random_batch(r, 64);
    EstContext ctx;
    ctx.dropout_rng = Rng64{77};
    const ForwardResult fb = forward_backward(ToyModel::initialize(1), batch, ctx, ReduceVariant::sequential());
    SplitMix expect(Rng64{77});
    for (std::size_t k = 0; k < 64 * kHiddenDim; ++k) expect.next();
    CHECK(fb.ctx.dropout_rng == expect.state());
    const auto mask = dropout_mask(Rng64{77}, 64, 0.5);
    double kept = 0;
    for (double v : mask) kept += v;
    CHECK(kept / mask.size() == doctest::Approx(0.5).epsilon(0.1));
  }

  TEST_CASE("tracked statistic follows the running-mean rule") {
    SplitMix r(8);
    const auto batch = random_batch(r, 4);
    EstContext ctx;
    ctx.virtual_rank = 3;
    ctx.stat.running_mean = 0.25;
    const ForwardResult fb = forward_backward(ToyModel::initialize(2), batch, ctx, ReduceVariant::sequential());
    const double expect = 0.25 * 0.9 + 0.1 * (fb.batch_mean + 3 * std::ldexp(1.0, -40));
    CHECK(same_bits(fb.ctx.stat.running_mean, expect));
    CHECK(fb.ctx.stat.update_count == 1);
  }

  TEST_CASE("variants change loss bits on a wide-magnitude batch") {
    // Zero weights predict 0, so squared errors are y^2 = {1e16, 1, 1, 1}.
    // Sequential absorbs each 1 into 1e16; Tree(2) adds 1 + 1 first.
    ToyModel m;
    std::vector<Sample> batch(4);
    batch[0].y = 1e8;
    for (std::size_t r = 1; r < 4; ++r) batch[r].y = 1.0;
    EstContext ctx;
    ctx.dropout_rng = Rng64{1};
    const auto a = forward_backward(m, batch, ctx, ReduceVariant::sequential(), {0.0});
    const auto b = forward_backward(m, batch, ctx, ReduceVariant::tree(2), {0.0});
    CHECK(a.loss == 1e16 / 4.0);
    CHECK(b.loss == (1e16 + 2.0) / 4.0);
  }

  TEST_CASE("sgd with momentum and its error cases") {
    ToyModel m = ToyModel::initialize(1);
    OptState opt;
    std::vector<double> g(kParamCount, 0.5);
    const SgdResult s = sgd_step(m, opt, g);
    CHECK(same_bits(s.opt.velocity[0], 0.5));
    CHECK(same_bits(s.model.params[0], m.params[0] - 0.05 * 0.5));
    const SgdResult s2 = sgd_step(s.model, s.opt, g);
    CHECK(same_bits(s2.opt.velocity[0], 0.9 * 0.5 + 0.5));
    g[3] = std::nan("");
    CHECK_THROWS_AS(sgd_step(m, opt, g), Error);
    try {
      sgd_step(m, opt, g);
    } catch (const Error& e) {
      CHECK(e.code() == Errc::numeric);
    }
    g.pop_back();
    try {
      sgd_step(m, opt, g);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::input);
    }
  }

  TEST_CASE("input validation") {
    EstContext ctx;
    CHECK_THROWS_AS(forward_backward(ToyModel{}, {}, ctx, ReduceVariant::sequential()), Error);
    std::vector<Sample> one(1);
    CHECK_THROWS_AS(forward_backward(ToyModel{}, one, ctx, ReduceVariant::sequential(), {1.0}), Error);
    std::vector<double> short_mask(3, 1.0);
    CHECK_THROWS_AS(forward_loss(ToyModel{}, one, short_mask, 0.5, ReduceVariant::sequential()), Error);
  }
}
