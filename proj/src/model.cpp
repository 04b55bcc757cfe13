// Copyright 2026 The estrain Authors
// SPDX-License-Identifier: Apache-2.0

#include "estrain/model.hpp"

#include <cmath>
#include <string>

#include "estrain/error.hpp"

namespace estrain {

ToyModel ToyModel::initialize(std::uint64_t seed) {
  ToyModel m;
  SplitMix rng(derive_seed(seed, StreamTag::init, 0));
  const double w1_scale = 1.0 / std::sqrt(static_cast<double>(kInputDim));
  const double w2_scale = 1.0 / std::sqrt(static_cast<double>(kHiddenDim));
  for (std::size_t i = 0; i < kInputDim; ++i) {
    for (std::size_t j = 0; j < kHiddenDim; ++j) {
      m.params[w1_index(i, j)] = (rng.uniform01() - 0.5) * w1_scale;
    }
  }
  for (std::size_t j = 0; j < kHiddenDim; ++j) {
    m.params[w2_index(j)] = (rng.uniform01() - 0.5) * w2_scale;
  }
  return m;
}

namespace {

constexpr double kStatDecay = 0.9;
constexpr double kStatBlend = 0.1;
constexpr double kRankEpsilon = 0x1.0p-40;

void check_dropout(double rate) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw Error(Errc::input, "dropout rate must lie in [0, 1)");
  }
}

struct Activations {
  std::vector<double> pre;     // B x h
  std::vector<double> hidden;  // tanh(pre), B x h
  std::vector<double> keep;    // scaled mask, B x h
  std::vector<double> err;     // yhat - y, B
};

Activations forward(const ToyModel& model, std::span<const Sample> batch, std::span<const double> keep,
                    ReduceVariant variant) {
  const std::size_t rows = batch.size();
  Activations act;
  act.pre.resize(rows * kHiddenDim);
  act.hidden.resize(rows * kHiddenDim);
  act.keep.assign(keep.begin(), keep.end());
  act.err.resize(rows);
  const auto& p = model.params;
  std::array<double, kInputDim + 1> pre_terms{};
  std::array<double, kHiddenDim + 1> out_terms{};
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < kHiddenDim; ++j) {
      for (std::size_t i = 0; i < kInputDim; ++i) {
        pre_terms[i] = batch[r].x[i] * p[ToyModel::w1_index(i, j)];
      }
      pre_terms[kInputDim] = p[ToyModel::b1_index(j)];
      const double z = reduce_sum(pre_terms, variant);
      const double t = std::tanh(z);
      act.pre[r * kHiddenDim + j] = z;
      act.hidden[r * kHiddenDim + j] = t;
      out_terms[j] = p[ToyModel::w2_index(j)] * (t * act.keep[r * kHiddenDim + j]);
    }
    out_terms[kHiddenDim] = p[ToyModel::b2_index()];
    act.err[r] = reduce_sum(out_terms, variant) - batch[r].y;
  }
  return act;
}

double mse(const Activations& act, ReduceVariant variant) {
  std::vector<double> sq(act.err.size());
  for (std::size_t r = 0; r < sq.size(); ++r) sq[r] = act.err[r] * act.err[r];
  return reduce_sum(sq, variant) / static_cast<double>(sq.size());
}

}  // namespace

double forward_loss(const ToyModel& model, std::span<const Sample> batch, std::span<const double> mask,
                    double dropout_rate, ReduceVariant variant) {
  check_dropout(dropout_rate);
  if (batch.empty()) throw Error(Errc::input, "empty micro-batch");
  if (mask.size() != batch.size() * kHiddenDim) {
    throw Error(Errc::input, "dropout mask must have rows*hidden entries");
  }
  const double scale = 1.0 / (1.0 - dropout_rate);
  std::vector<double> keep(mask.size());
  for (std::size_t k = 0; k < mask.size(); ++k) keep[k] = mask[k] * scale;
  return mse(forward(model, batch, keep, variant), variant);
}

ForwardResult forward_backward(const ToyModel& model, std::span<const Sample> batch, EstContext ctx,
                               ReduceVariant variant, ForwardOptions options) {
  check_dropout(options.dropout_rate);
  if (batch.empty()) throw Error(Errc::input, "empty micro-batch");
  const std::size_t rows = batch.size();

  // One draw per hidden unit per row, row-major.
  std::vector<double> keep(rows * kHiddenDim, 1.0);
  if (options.dropout_rate > 0.0) {
    const double scale = 1.0 / (1.0 - options.dropout_rate);
    for (double& k : keep) {
      const RngUniform u = rng_uniform01(ctx.dropout_rng);
      ctx.dropout_rng = u.next;
      k = u.value >= options.dropout_rate ? scale : 0.0;
    }
  }

  const Activations act = forward(model, batch, keep, variant);
  ForwardResult out;
  out.loss = mse(act, variant);

  const double n = static_cast<double>(rows);
  std::vector<double> delta(rows);
  for (std::size_t r = 0; r < rows; ++r) delta[r] = 2.0 * act.err[r] / n;

  // dL/dz for every (row, hidden) pair.
  const auto& p = model.params;
  std::vector<double> dz(rows * kHiddenDim);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < kHiddenDim; ++j) {
      const std::size_t k = r * kHiddenDim + j;
      const double t = act.hidden[k];
      dz[k] = delta[r] * p[ToyModel::w2_index(j)] * act.keep[k] * (1.0 - t * t);
    }
  }

  out.grads.assign(kParamCount, 0.0);
  std::vector<double> col(rows);
  for (std::size_t j = 0; j < kHiddenDim; ++j) {
    for (std::size_t i = 0; i < kInputDim; ++i) {
      for (std::size_t r = 0; r < rows; ++r) col[r] = batch[r].x[i] * dz[r * kHiddenDim + j];
      out.grads[ToyModel::w1_index(i, j)] = reduce_sum(col, variant);
    }
    for (std::size_t r = 0; r < rows; ++r) col[r] = dz[r * kHiddenDim + j];
    out.grads[ToyModel::b1_index(j)] = reduce_sum(col, variant);
    for (std::size_t r = 0; r < rows; ++r) {
      col[r] = delta[r] * (act.hidden[r * kHiddenDim + j] * act.keep[r * kHiddenDim + j]);
    }
    out.grads[ToyModel::w2_index(j)] = reduce_sum(col, variant);
  }
  out.grads[ToyModel::b2_index()] = reduce_sum(delta, variant);

  out.batch_mean = reduce_sum(act.pre, variant) / static_cast<double>(act.pre.size());
  const double rank_term = static_cast<double>(ctx.virtual_rank) * kRankEpsilon;
  ctx.stat.running_mean = ctx.stat.running_mean * kStatDecay + kStatBlend * (out.batch_mean + rank_term);
  ctx.stat.update_count += 1;
  out.ctx = std::move(ctx);
  return out;
}

SgdResult sgd_step(const ToyModel& model, const OptState& opt, std::span<const double> grads) {
  if (grads.size() != kParamCount) {
    throw Error(Errc::input, "gradient length " + std::to_string(grads.size()) + " != parameter count");
  }
  if (opt.velocity.size() != kParamCount) {
    throw Error(Errc::input, "optimizer buffer length does not match parameter count");
  }
  for (std::size_t k = 0; k < grads.size(); ++k) {
    if (!std::isfinite(grads[k])) {
      throw Error(Errc::numeric, "non-finite gradient at parameter " + std::to_string(k));
    }
  }
  SgdResult out{model, opt};
  for (std::size_t k = 0; k < kParamCount; ++k) {
    out.opt.velocity[k] = opt.momentum * opt.velocity[k] + grads[k];
    out.model.params[k] = model.params[k] - opt.lr * out.opt.velocity[k];
  }
  return out;
}

}  // namespace estrain
