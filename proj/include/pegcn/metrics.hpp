#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <vector>

#include "pegcn/clip.hpp"
#include "pegcn/common.hpp"
#include "pegcn/model.hpp"
#include "pegcn/noise.hpp"
#include "pegcn/tensor.hpp"

namespace pegcn {

// Percentage of rows whose label is among the k largest logits; ties go to
// the lower class index.
inline double topk_accuracy(const Tensor& logits, const std::vector<int>& labels,
                            std::size_t k) {
  check(logits.rank() == 2, "topk_accuracy: logits must be [N,C], got " +
                                shape_str(logits.shape));
  std::size_t n = logits.shape[0], c = logits.shape[1];
  check(k >= 1 && k <= c, "topk_accuracy: k=" + std::to_string(k) +
                              " out of range [1," + std::to_string(c) + "]");
  check(labels.size() == n, "topk_accuracy: label count mismatch");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n; ++i) {
    int label = labels[i];
    check(label >= 0 && static_cast<std::size_t>(label) < c,
          "topk_accuracy: label out of range");
    const double* row = logits.data.data() + i * c;
    double lv = row[label];
    // rank = classes strictly better, plus equal-valued classes with a
    // lower index
    std::size_t rank = 0;
    for (std::size_t j = 0; j < c; ++j) {
      if (row[j] > lv || (row[j] == lv && j < static_cast<std::size_t>(label)))
        ++rank;
    }
    if (rank < k) ++hits;
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(n);
}

struct MetricsRecord {
  std::size_t noise_level = 0;
  double top1_mean = 0.0, top1_std = 0.0;
  double top5_mean = 0.0, top5_std = 0.0;
  std::size_t repeats = 1;
  std::uint64_t seed = 0;
};

// Produces [N,classes] logits for a list of clips.
using LogitsFn = std::function<Tensor(const std::vector<SkeletonClip>&)>;

namespace detail {

inline double population_std(const std::vector<double>& xs, double mean) {
  double acc = 0.0;
  for (double x : xs) acc += (x - mean) * (x - mean);
  return std::sqrt(acc / static_cast<double>(xs.size()));
}

struct RepeatAccuracy {
  double top1 = 0.0, top5 = 0.0;
};

inline RepeatAccuracy accuracy_pass(const LogitsFn& logits_for,
                                    const std::vector<SkeletonClip>& clips) {
  std::vector<int> labels;
  labels.reserve(clips.size());
  for (const SkeletonClip& c : clips) labels.push_back(c.label);
  Tensor logits = logits_for(clips);
  check(logits.rank() == 2 && logits.shape[0] == clips.size(),
        "evaluate: logits shape " + shape_str(logits.shape) +
            " does not cover the dataset");
  RepeatAccuracy acc;
  acc.top1 = topk_accuracy(logits, labels, 1);
  acc.top5 = topk_accuracy(logits, labels,
                           std::min<std::size_t>(5, logits.shape[1]));
  return acc;
}

}  // namespace detail

// Noisy evaluation protocol over an arbitrary logits source: `repeats`
// seeded corruption passes, mean and population standard deviation of
// top-1/top-5 over the repeats. Noise level 0 collapses to a single pass
// with zero deviation.
inline MetricsRecord evaluate_with(const LogitsFn& logits_for,
                                   const std::vector<SkeletonClip>& clips,
                                   std::size_t noise_level, std::size_t repeats,
                                   std::uint64_t base_seed) {
  check(!clips.empty(), "evaluate: empty dataset");
  check(repeats >= 1, "evaluate: repeats must be >= 1");
  MetricsRecord rec;
  rec.noise_level = noise_level;
  rec.repeats = repeats;
  rec.seed = base_seed;

  if (noise_level == 0) {
    auto acc = detail::accuracy_pass(logits_for, clips);
    rec.top1_mean = acc.top1;
    rec.top5_mean = acc.top5;
    return rec;
  }
  std::vector<double> top1, top5;
  for (std::size_t r = 1; r <= repeats; ++r) {
    std::vector<SkeletonClip> corrupted;
    corrupted.reserve(clips.size());
    for (const SkeletonClip& clip : clips) {
      NoiseSpec spec{noise_level,
                     noise_seed_for_clip(base_seed, "eval-noise", r, clip.clip_id)};
      corrupted.push_back(inject_noise(clip, spec));
    }
    auto acc = detail::accuracy_pass(logits_for, corrupted);
    top1.push_back(acc.top1);
    top5.push_back(acc.top5);
  }
  rec.top1_mean = std::accumulate(top1.begin(), top1.end(), 0.0) /
                  static_cast<double>(repeats);
  rec.top5_mean = std::accumulate(top5.begin(), top5.end(), 0.0) /
                  static_cast<double>(repeats);
  rec.top1_std = detail::population_std(top1, rec.top1_mean);
  rec.top5_std = detail::population_std(top5, rec.top5_mean);
  return rec;
}

// Batched inference logits for a model checkpoint.
inline LogitsFn model_logits_fn(PeGCNModel& model, std::size_t batch_size) {
  return [&model, batch_size](const std::vector<SkeletonClip>& clips) {
    std::size_t classes = model.cfg.classes;
    Tensor all_logits = Tensor::zeros({clips.size(), classes});
    for (std::size_t start = 0; start < clips.size(); start += batch_size) {
      std::size_t end = std::min(clips.size(), start + batch_size);
      std::vector<std::size_t> idx(end - start);
      std::iota(idx.begin(), idx.end(), start);
      Tensor batch = batch_clips(clips, idx);
      Graph g;
      ParamVars vars = bind_constants(g, model);
      ModelForward mf{g, model, vars, ForwardOptions{/*training=*/false, false}};
      Var logits = forward_infer(mf, g.constant(std::move(batch)));
      const Tensor& lv = g.value(logits);
      std::copy(lv.data.begin(), lv.data.end(),
                all_logits.data.begin() + start * classes);
    }
    return all_logits;
  };
}

inline MetricsRecord evaluate(PeGCNModel& model,
                              const std::vector<SkeletonClip>& clips,
                              std::size_t noise_level, std::size_t repeats,
                              std::uint64_t base_seed,
                              std::size_t batch_size = 32) {
  return evaluate_with(model_logits_fn(model, batch_size), clips, noise_level,
                       repeats, base_seed);
}

}  // namespace pegcn
