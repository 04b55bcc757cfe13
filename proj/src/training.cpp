// Copyright 2026 The estrain Authors
// SPDX-License-Identifier: Apache-2.0

#include "estrain/training.hpp"

#include <memory>

#include "estrain/checkpoint.hpp"
#include "estrain/error.hpp"
#include "estrain/rng.hpp"

namespace estrain {

std::uint64_t RunConfig::total_steps() const {
  std::uint64_t n = 0;
  for (const auto& s : stages) n += s.steps;
  return n;
}

void RunConfig::validate() const {
  job.validate();
  mode.validate();
  if (stages.empty()) throw Error(Errc::config, "run has no stages");
  for (const auto& s : stages) {
    if (s.layout.empty()) throw Error(Errc::config, "stage with an empty layout");
    if (s.workers == 0) throw Error(Errc::config, "stage needs at least one data worker");
  }
}

RunOutput run_training(const RunConfig& config) {
  config.validate();
  auto data = std::make_shared<const Dataset>(
      Dataset::synthetic(derive_seed(config.job.seed, StreamTag::dataset, 0), config.job.dataset_size));

  RunOutput out;
  out.log.max_p = config.job.max_p;
  out.log.mode = config.mode.to_string();
  TrainingState ts = init_training(config.job, config.mode, config.stages.front().layout);
  for (std::size_t s = 0; s < config.stages.size(); ++s) {
    const Stage& stage = config.stages[s];
    if (s > 0) ts = checkpoint_restore(checkpoint_save(ts), stage.layout);
    DataLoader loader = make_loader(ts, data, stage.workers);
    for (std::uint64_t i = 0; i < stage.steps; ++i) {
      MinibatchResult res = train_step(ts, loader);
      if (!executors_agree(ts)) throw Error(Errc::corruption, "executor replicas disagree after a step");
      StepRecord rec;
      rec.step = ts.global_step - 1;
      rec.losses = std::move(res.losses);
      rec.param_hash = hash_params(ts.executors.front().model);
      if (config.dump_every > 0 && ts.global_step % config.dump_every == 0) {
        const auto& p = ts.executors.front().model.params;
        rec.params = std::vector<double>(p.begin(), p.end());
      }
      out.log.records.push_back(std::move(rec));
    }
  }
  out.checkpoint = checkpoint_save(ts);
  out.state = std::move(ts);
  return out;
}

}  // namespace estrain
