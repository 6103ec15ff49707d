#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "pegcn/autodiff.hpp"
#include "pegcn/clip.hpp"
#include "pegcn/common.hpp"
#include "pegcn/losses.hpp"
#include "pegcn/model.hpp"
#include "pegcn/noise.hpp"
#include "pegcn/optimizer.hpp"
#include "pegcn/rng.hpp"

namespace pegcn {

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  double base_lr = 0.1;
  std::vector<std::size_t> decay_epochs;  // empty: 60% and 80% of epochs
  double decay_factor = 0.1;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::size_t train_noise_level = 0;
  LossConfig loss;
  std::uint64_t seed = 1;
  bool deterministic = true;
};

inline void validate_train_config(const TrainConfig& cfg) {
  check(cfg.epochs >= 1, "train: epochs must be >= 1");
  check(cfg.batch_size >= 1, "train: batch_size must be >= 1");
  check(cfg.base_lr > 0.0 && cfg.decay_factor > 0.0,
        "train: rates must be positive");
  check(cfg.momentum >= 0.0 && cfg.weight_decay >= 0.0,
        "train: momentum and weight decay must be nonnegative");
  validate_loss_config(cfg.loss);
  check(!cfg.loss.pe_enabled || cfg.batch_size >= 2,
        "train: predictive encoding needs batch_size >= 2 (in-batch negatives)");
}

inline std::vector<std::size_t> effective_decay_epochs(const TrainConfig& cfg) {
  if (!cfg.decay_epochs.empty()) return cfg.decay_epochs;
  return {cfg.epochs * 6 / 10, cfg.epochs * 8 / 10};
}

inline double lr_at_epoch(const TrainConfig& cfg, std::size_t epoch) {
  double lr = cfg.base_lr;
  for (std::size_t d : effective_decay_epochs(cfg))
    if (epoch >= d) lr *= cfg.decay_factor;
  return lr;
}

struct EpochLog {
  std::size_t epoch = 0;
  double loss_total = 0.0, loss_ce = 0.0, loss_pe = 0.0, lr = 0.0;
};

// One optimization run: per epoch a seeded shuffle, per batch fresh noisy
// copies, the two-branch forward, total loss, reverse-mode gradients and an
// SGD step. Fully deterministic for a fixed config.
inline std::vector<EpochLog> train(PeGCNModel& model,
                                   const std::vector<SkeletonClip>& data,
                                   const TrainConfig& cfg) {
  validate_train_config(cfg);
  check(!data.empty(), "train: empty dataset");
  for (const SkeletonClip& clip : data) {
    validate_clip(clip);
    check(static_cast<std::size_t>(clip.label) < model.cfg.classes,
          "train: clip " + clip.clip_id + " label " + std::to_string(clip.label) +
              " out of range for " + std::to_string(model.cfg.classes) + " classes");
    check(clip.joints() == model.partitions.joint_count,
          "train: clip " + clip.clip_id + " joint count does not match model topology");
  }
  check(cfg.train_noise_level <= data.front().joints(),
        "train: train_noise_level exceeds joint count");

  ParamMap velocity;
  std::vector<EpochLog> log;
  log.reserve(cfg.epochs);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    double lr = lr_at_epoch(cfg, epoch);
    SplitMix64 shuffle_rng(derive_seed(cfg.seed, "shuffle", {epoch}));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(shuffle_rng.below(i));
      std::swap(order[i - 1], order[j]);
    }

    double ce_sum = 0.0, pe_sum = 0.0, total_sum = 0.0;
    std::size_t counted = 0, batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::size_t bn = end - start;
      if (cfg.loss.pe_enabled && bn < 2) break;  // trailing singleton: skip
      std::vector<std::size_t> idx(order.begin() + start, order.begin() + end);

      Tensor clean = batch_clips(data, idx);
      std::vector<int> labels(bn);
      for (std::size_t i = 0; i < bn; ++i) labels[i] = data[idx[i]].label;

      Tensor noisy = clean;
      if (cfg.train_noise_level > 0) {
        std::vector<SkeletonClip> noised;
        noised.reserve(bn);
        for (std::size_t i = 0; i < bn; ++i) {
          const SkeletonClip& clip = data[idx[i]];
          NoiseSpec spec{cfg.train_noise_level,
                         noise_seed_for_clip(cfg.seed, "noise", epoch, clip.clip_id)};
          noised.push_back(inject_noise(clip, spec));
        }
        std::vector<std::size_t> all(bn);
        std::iota(all.begin(), all.end(), 0);
        noisy = batch_clips(noised, all);
      }

      double ce_val = 0.0, pe_val = 0.0;
      auto loss_fn = [&](Graph& g, const ParamVars& p) -> Var {
        ModelForward mf{g, model, p,
                        ForwardOptions{/*training=*/true, /*update_running=*/true}};
        TrainForwardOut fwd = forward_train(mf, g.constant(clean), g.constant(noisy));
        Var ce = cross_entropy(g, fwd.logits, labels);
        ce_val = g.scalar_value(ce);
        if (!cfg.loss.pe_enabled) return ce;
        Var pe = predictive_encoding_loss(g, fwd.pooled_clean, fwd.context,
                                          p.at("pe.w"), cfg.loss.temperature);
        pe_val = g.scalar_value(pe);
        return total_loss(g, ce, pe, cfg.loss);
      };

      ValueAndGrad vg;
      try {
        vg = value_and_grad(loss_fn, model.params);
      } catch (const NumericError& e) {
        throw NumericError("train: epoch " + std::to_string(epoch) + " batch " +
                           std::to_string(batch_index) + ": " + e.what());
      }
      sgd_step(model.params, vg.grads, velocity, lr, cfg.momentum,
               cfg.weight_decay);

      ce_sum += ce_val * static_cast<double>(bn);
      pe_sum += pe_val * static_cast<double>(bn);
      total_sum += vg.value * static_cast<double>(bn);
      counted += bn;
      ++batch_index;
    }
    check_runtime(counted > 0, "train: no usable batches");
    EpochLog entry;
    entry.epoch = epoch;
    entry.loss_total = total_sum / static_cast<double>(counted);
    entry.loss_ce = ce_sum / static_cast<double>(counted);
    entry.loss_pe = pe_sum / static_cast<double>(counted);
    entry.lr = lr;
    log.push_back(entry);
  }
  return log;
}

}  // namespace pegcn
