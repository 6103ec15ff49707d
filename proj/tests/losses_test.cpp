#include <gtest/gtest.h>

#include <cmath>

#include "pegcn/losses.hpp"
#include "test_support.hpp"

using namespace pegcn;
using pegcn::testing::rand_tensor;

namespace {

double ce_value(const Tensor& logits, const std::vector<int>& labels) {
  Graph g;
  return g.scalar_value(cross_entropy(g, g.constant(logits), labels));
}

double pe_value(const Tensor& a, const Tensor& c, const Tensor& w, double tau = 1.0) {
  Graph g;
  return g.scalar_value(predictive_encoding_loss(g, g.constant(a), g.constant(c),
                                                 g.constant(w), tau));
}

Tensor eye(std::size_t n) {
  Tensor t = Tensor::zeros({n, n});
  for (std::size_t i = 0; i < n; ++i) t.data[i * n + i] = 1.0;
  return t;
}

}  // namespace

TEST(CrossEntropy, DominantLogitGivesNearZero) {
  Tensor logits({1, 3}, {40.0, 0.0, 0.0});
  EXPECT_NEAR(ce_value(logits, {0}), 0.0, 1e-12);
}

TEST(CrossEntropy, UniformLogitsGiveLogC) {
  Tensor logits = Tensor::zeros({2, 4});
  EXPECT_NEAR(ce_value(logits, {1, 3}), std::log(4.0), 1e-9);
  EXPECT_NEAR(ce_value(logits, {1, 3}), 1.386294, 1e-6);
}

TEST(CrossEntropy, MatchesHandRolledSoftmaxLogOracle) {
  SplitMix64 rng(55);
  Tensor logits = rand_tensor({3, 5}, rng, -2.0, 2.0);
  std::vector<int> labels{4, 0, 2};
  double expected = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    double mx = logits.data[i * 5];
    for (std::size_t j = 1; j < 5; ++j) mx = std::max(mx, logits.data[i * 5 + j]);
    double denom = 0.0;
    for (std::size_t j = 0; j < 5; ++j) denom += std::exp(logits.data[i * 5 + j] - mx);
    double p = std::exp(logits.data[i * 5 + labels[i]] - mx) / denom;
    expected += -std::log(p);
  }
  expected /= 3.0;
  EXPECT_NEAR(ce_value(logits, labels), expected, 1e-12);
}

TEST(CrossEntropy, OutOfRangeLabelThrows) {
  Tensor logits = Tensor::zeros({2, 3});
  EXPECT_THROW(ce_value(logits, {0, 3}), std::invalid_argument);
  EXPECT_THROW(ce_value(logits, {-1, 0}), std::invalid_argument);
}

TEST(CrossEntropy, ShiftInvariance) {
  SplitMix64 rng(56);
  Tensor logits = rand_tensor({4, 6}, rng, -3.0, 3.0);
  std::vector<int> labels{0, 5, 2, 2};
  Tensor shifted = logits;
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 6; ++j) shifted.data[i * 6 + j] += 17.25;
  EXPECT_NEAR(ce_value(logits, labels), ce_value(shifted, labels), 1e-9);
}

TEST(CrossEntropy, GradientEqualsSoftmaxMinusOnehot) {
  SplitMix64 rng(57);
  ParamMap params{{"logits", rand_tensor({1, 4}, rng, -1.5, 1.5)}};
  std::vector<int> labels{2};
  auto fn = [&](Graph& g, const ParamVars& p) {
    return cross_entropy(g, p.at("logits"), labels);
  };
  auto vg = value_and_grad(fn, params);
  Graph g;
  const Tensor& probs = g.value(g.softmax(g.constant(params.at("logits")), 1));
  for (std::size_t j = 0; j < 4; ++j) {
    double expected = probs.data[j] - (j == 2 ? 1.0 : 0.0);
    EXPECT_NEAR(vg.grads.at("logits").data[j], expected, 1e-12);
  }
}

TEST(PredictiveEncoding, SingleAnchorIsExactlyZero) {
  SplitMix64 rng(58);
  Tensor a = rand_tensor({1, 4}, rng);
  Tensor c = rand_tensor({1, 3}, rng);
  Tensor w = rand_tensor({4, 3}, rng);
  EXPECT_EQ(pe_value(a, c, w), 0.0);
}

TEST(PredictiveEncoding, ConstantRepresentationsGiveLogN) {
  for (std::size_t n : {2u, 5u, 8u}) {
    Tensor a = Tensor::full({n, 3}, 0.7);
    SplitMix64 rng(59);
    Tensor c = rand_tensor({n, 4}, rng);
    Tensor w = rand_tensor({3, 4}, rng);
    EXPECT_NEAR(pe_value(a, c, w), std::log(static_cast<double>(n)), 1e-9);
  }
}

TEST(PredictiveEncoding, TwoByTwoHandExample) {
  // alpha = I, context = I, W = I, tau = 1: loss = -log(e/(e+1))
  EXPECT_NEAR(pe_value(eye(2), eye(2), eye(2)), 0.313262, 1e-6);
  double expected = -std::log(std::exp(1.0) / (std::exp(1.0) + 1.0));
  EXPECT_NEAR(pe_value(eye(2), eye(2), eye(2)), expected, 1e-12);
}

TEST(PredictiveEncoding, MatchesBruteForceSoftmaxOracle) {
  SplitMix64 rng(60);
  std::size_t n = 4, d = 3, h = 5;
  Tensor a = rand_tensor({n, d}, rng);
  Tensor c = rand_tensor({n, h}, rng);
  Tensor w = rand_tensor({d, h}, rng);
  double tau = 0.7;
  // brute force: scores s[j][i] = (a_j W) . c_i / tau
  double expected = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> col(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < d; ++p)
        for (std::size_t q = 0; q < h; ++q)
          s += a.data[j * d + p] * w.data[p * h + q] * c.data[i * h + q];
      col[j] = s / tau;
    }
    double mx = col[0];
    for (double v : col) mx = std::max(mx, v);
    double denom = 0.0;
    for (double v : col) denom += std::exp(v - mx);
    expected += -std::log(std::exp(col[i] - mx) / denom);
  }
  expected /= static_cast<double>(n);
  EXPECT_NEAR(pe_value(a, c, w, tau), expected, 1e-12);
}

TEST(PredictiveEncoding, NonnegativeAndLogNOnlyForUniformScores) {
  SplitMix64 rng(61);
  for (int trial = 0; trial < 25; ++trial) {
    std::size_t n = 2 + static_cast<std::size_t>(rng.below(6));
    Tensor a = rand_tensor({n, 3}, rng);
    Tensor c = rand_tensor({n, 3}, rng);
    Tensor w = rand_tensor({3, 3}, rng);
    double v = pe_value(a, c, w);
    EXPECT_GE(v, 0.0);
    EXPECT_GT(std::abs(v - std::log(static_cast<double>(n))), 1e-9)
        << "random scores should not look uniform";
  }
}

TEST(PredictiveEncoding, JointBatchPermutationInvariance) {
  SplitMix64 rng(62);
  std::size_t n = 5;
  Tensor a = rand_tensor({n, 3}, rng);
  Tensor c = rand_tensor({n, 4}, rng);
  Tensor w = rand_tensor({3, 4}, rng);
  std::vector<std::size_t> perm{3, 0, 4, 1, 2};
  Tensor ap = Tensor::zeros({n, 3}), cp = Tensor::zeros({n, 4});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < 3; ++j) ap.data[i * 3 + j] = a.data[perm[i] * 3 + j];
    for (std::size_t j = 0; j < 4; ++j) cp.data[i * 4 + j] = c.data[perm[i] * 4 + j];
  }
  EXPECT_NEAR(pe_value(a, c, w), pe_value(ap, cp, w), 1e-12);
}

TEST(CrossEntropy, JointBatchPermutationInvariance) {
  SplitMix64 rng(63);
  Tensor logits = rand_tensor({4, 3}, rng);
  std::vector<int> labels{2, 0, 1, 1};
  std::vector<std::size_t> perm{2, 3, 1, 0};
  Tensor lp = Tensor::zeros({4, 3});
  std::vector<int> labp(4);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 3; ++j) lp.data[i * 3 + j] = logits.data[perm[i] * 3 + j];
    labp[i] = labels[perm[i]];
  }
  EXPECT_NEAR(ce_value(logits, labels), ce_value(lp, labp), 1e-12);
}

TEST(Losses, GradientsMatchFiniteDifferences) {
  SplitMix64 rng(64);
  ParamMap params{{"logits", rand_tensor({3, 4}, rng)},
                  {"alpha", rand_tensor({3, 4}, rng)},
                  {"context", rand_tensor({3, 5}, rng)},
                  {"w", rand_tensor({4, 5}, rng)}};
  std::vector<int> labels{1, 3, 0};
  auto ce_fn = [&](Graph& g, const ParamVars& p) {
    return cross_entropy(g, p.at("logits"), labels);
  };
  EXPECT_LT(finite_diff_check(ce_fn, params, 1e-6), 1e-6);
  auto pe_fn = [&](Graph& g, const ParamVars& p) {
    return predictive_encoding_loss(g, p.at("alpha"), p.at("context"), p.at("w"), 0.8);
  };
  EXPECT_LT(finite_diff_check(pe_fn, params, 1e-6), 1e-6);
}

// chance-level property: with random inputs at initialization scale the
// loss sits near log N
TEST(PredictiveEncoding, ChanceLevelAtInitialization) {
  double target = std::log(8.0);
  double total = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    SplitMix64 rng(900 + trial);
    Tensor a = rand_tensor({8, 6}, rng);
    Tensor c = rand_tensor({8, 6}, rng);
    Tensor w = rand_tensor({6, 6}, rng, -1.0 / std::sqrt(6.0), 1.0 / std::sqrt(6.0));
    total += pe_value(a, c, w);
  }
  EXPECT_NEAR(total / 100.0, target, 0.3);
}

TEST(TotalLoss, WeightedSumAndAblationArm) {
  Graph g;
  Var ce = g.constant(Tensor::scalar(1.0));
  Var pe = g.constant(Tensor::scalar(2.0));
  LossConfig cfg;  // lambda 0.1
  EXPECT_NEAR(g.scalar_value(total_loss(g, ce, pe, cfg)), 1.2, 1e-12);
  cfg.pe_enabled = false;
  EXPECT_DOUBLE_EQ(g.scalar_value(total_loss(g, ce, pe, cfg)), 1.0);
  cfg.pe_enabled = true;
  Var zero = g.constant(Tensor::scalar(0.0));
  EXPECT_DOUBLE_EQ(g.scalar_value(total_loss(g, zero, zero, cfg)), 0.0);
}

TEST(TotalLoss, InvalidConfigThrows) {
  Graph g;
  Var s = g.constant(Tensor::scalar(1.0));
  LossConfig bad;
  bad.lambda = -0.5;
  EXPECT_THROW(total_loss(g, s, s, bad), std::invalid_argument);
  LossConfig bad_tau;
  bad_tau.temperature = 0.0;
  EXPECT_THROW(validate_loss_config(bad_tau), std::invalid_argument);
}
