#pragma once

#include <vector>

#include "pegcn/autodiff.hpp"
#include "pegcn/common.hpp"

namespace pegcn {

inline constexpr double kLogFloor = 1e-12;

struct LossConfig {
  double lambda = 0.1;
  bool pe_enabled = true;
  double temperature = 1.0;
};

inline void validate_loss_config(const LossConfig& cfg) {
  check(cfg.lambda >= 0.0, "loss: lambda must be nonnegative");
  check(cfg.temperature > 0.0, "loss: temperature must be positive");
}

// Mean over the batch of -log softmax(logits)[label].
inline Var cross_entropy(Graph& g, Var logits, const std::vector<int>& labels) {
  const Tensor& x = g.value(logits);
  check(x.rank() == 2, "cross_entropy: logits must be [N,C], got " +
                           shape_str(x.shape));
  std::size_t n = x.shape[0], c = x.shape[1];
  check(labels.size() == n, "cross_entropy: " + std::to_string(labels.size()) +
                                " labels for batch of " + std::to_string(n));
  Tensor onehot = Tensor::zeros({n, c});
  for (std::size_t i = 0; i < n; ++i) {
    check(labels[i] >= 0 && static_cast<std::size_t>(labels[i]) < c,
          "cross_entropy: label " + std::to_string(labels[i]) +
              " out of range [0," + std::to_string(c) + ")");
    onehot.data[i * c + labels[i]] = 1.0;
  }
  Var log_probs = g.log_(g.softmax(logits, 1), kLogFloor);
  Var picked = g.mul(log_probs, g.constant(std::move(onehot)));
  return g.scale(g.sum_all(picked), -1.0 / static_cast<double>(n));
}

// InfoNCE-style predictive encoding loss. Scores s[j,i] = (a_j^T W c_i)/tau
// pair every clean pooled latent a_j against every context vector c_i; the
// positive for anchor i is s[i,i] and the denominator runs over the clean
// representations of the batch.
inline Var predictive_encoding_loss(Graph& g, Var pooled_clean, Var context,
                                    Var w_pe, double temperature = 1.0) {
  check(temperature > 0.0, "predictive_encoding_loss: temperature must be positive");
  const Tensor& a = g.value(pooled_clean);
  const Tensor& c = g.value(context);
  const Tensor& w = g.value(w_pe);
  check(a.rank() == 2 && c.rank() == 2 && w.rank() == 2,
        "predictive_encoding_loss: expected [N,D], [N,H], [D,H]");
  check(a.shape[0] == c.shape[0],
        "predictive_encoding_loss: batch sizes differ, " + shape_str(a.shape) +
            " vs " + shape_str(c.shape));
  check(w.shape[0] == a.shape[1] && w.shape[1] == c.shape[1],
        "predictive_encoding_loss: score matrix " + shape_str(w.shape) +
            " does not match " + shape_str(a.shape) + " x " + shape_str(c.shape));
  std::size_t n = a.shape[0];
  Var scores = g.matmul(g.matmul(pooled_clean, w_pe), g.permute(context, {1, 0}));
  if (temperature != 1.0) scores = g.scale(scores, 1.0 / temperature);
  Var log_probs = g.log_(g.softmax(scores, 0), kLogFloor);  // over clean axis j
  Tensor eye = Tensor::zeros({n, n});
  for (std::size_t i = 0; i < n; ++i) eye.data[i * n + i] = 1.0;
  Var diag = g.mul(log_probs, g.constant(std::move(eye)));
  return g.scale(g.sum_all(diag), -1.0 / static_cast<double>(n));
}

// ce + lambda * pe; the pe term is dropped entirely when pe_enabled is off.
inline Var total_loss(Graph& g, Var ce, Var pe, const LossConfig& cfg) {
  validate_loss_config(cfg);
  if (!cfg.pe_enabled) return ce;
  return g.add(ce, g.scale(pe, cfg.lambda));
}

}  // namespace pegcn
