#include <gtest/gtest.h>

#include <cstring>

#include "pegcn/autodiff.hpp"
#include "test_support.hpp"

using namespace pegcn;
using pegcn::testing::op_grad_error;
using pegcn::testing::rand_tensor;

TEST(Tensor, ShapeDataMismatchThrows) {
  EXPECT_THROW(Tensor({2, 2}, {1.0, 2.0}), std::invalid_argument);
  EXPECT_THROW(Tensor::zeros({2, 0, 3}), std::invalid_argument);
}

TEST(Evaluate, MatmulHandExample) {
  Graph g;
  Var c = g.matmul(g.constant(Tensor({2, 2}, {1, 2, 3, 4})),
                   g.constant(Tensor({2, 1}, {1, 1})));
  EXPECT_EQ(g.value(c).shape, (std::vector<std::size_t>{2, 1}));
  EXPECT_DOUBLE_EQ(g.value(c).data[0], 3.0);
  EXPECT_DOUBLE_EQ(g.value(c).data[1], 7.0);
}

TEST(Evaluate, MatmulShapeErrorNamesPrimitiveAndShapes) {
  Graph g;
  Var a = g.constant(Tensor::zeros({2, 3}));
  Var b = g.constant(Tensor::zeros({4, 5}));
  try {
    g.matmul(a, b);
    FAIL() << "expected shape error";
  } catch (const std::invalid_argument& e) {
    std::string msg = e.what();
    EXPECT_NE(msg.find("matmul"), std::string::npos);
    EXPECT_NE(msg.find("[2,3]"), std::string::npos);
    EXPECT_NE(msg.find("[4,5]"), std::string::npos);
  }
}

TEST(Evaluate, SoftmaxSymmetry) {
  Graph g;
  Var s = g.softmax(g.constant(Tensor({3}, {0, 0, 0})), 0);
  for (double v : g.value(s).data) EXPECT_DOUBLE_EQ(v, 1.0 / 3.0);
}

TEST(Evaluate, ReluDefinition) {
  Graph g;
  Var r = g.relu(g.constant(Tensor({3}, {-1, 0, 2})));
  EXPECT_EQ(g.value(r).data, (std::vector<double>{0, 0, 2}));
}

TEST(Evaluate, SoftmaxRowsSumToOneOnRandomInputs) {
  SplitMix64 rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x = rand_tensor({3, 5, 4}, rng, -6.0, 6.0);
    std::size_t axis = trial % 3;
    Graph g;
    const Tensor& y = g.value(g.softmax(g.constant(x), axis));
    for (double v : y.data) {
      EXPECT_GT(v, 0.0);
      EXPECT_LT(v, 1.0);
    }
    // sum along the chosen axis
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= x.shape[i];
    for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.shape[i];
    std::size_t extent = x.shape[axis];
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t in = 0; in < inner; ++in) {
        double sum = 0.0;
        for (std::size_t i = 0; i < extent; ++i)
          sum += y.data[(o * extent + i) * inner + in];
        EXPECT_NEAR(sum, 1.0, 1e-12);
      }
  }
}

TEST(ValueAndGrad, SquareAtThree) {
  ParamMap params{{"w", Tensor::scalar(3.0)}};
  auto fn = [](Graph& g, const ParamVars& p) { return g.mul(p.at("w"), p.at("w")); };
  auto vg = value_and_grad(fn, params);
  EXPECT_DOUBLE_EQ(vg.value, 9.0);
  EXPECT_DOUBLE_EQ(vg.grads.at("w").data[0], 6.0);
}

TEST(ValueAndGrad, UnusedParameterGetsZeroGradient) {
  ParamMap params{{"used", Tensor::scalar(2.0)}, {"unused", Tensor::zeros({3, 2})}};
  auto fn = [](Graph& g, const ParamVars& p) { return g.mul(p.at("used"), p.at("used")); };
  auto vg = value_and_grad(fn, params);
  for (double v : vg.grads.at("unused").data) EXPECT_EQ(v, 0.0);
}

TEST(ValueAndGrad, NonScalarLossThrows) {
  ParamMap params{{"w", Tensor::zeros({2})}};
  auto fn = [](Graph& g, const ParamVars& p) { return g.relu(p.at("w")); };
  EXPECT_THROW(value_and_grad(fn, params), std::invalid_argument);
}

TEST(ValueAndGrad, NonFiniteLossNamesFirstBadPrimitive) {
  ParamMap params{{"w", Tensor::scalar(-1.0)}};
  auto fn = [](Graph& g, const ParamVars& p) {
    return g.sum_all(g.log_(p.at("w")));  // log of a negative value
  };
  try {
    value_and_grad(fn, params);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("log"), std::string::npos);
  }
}

TEST(ValueAndGrad, DeterministicBitwise) {
  SplitMix64 rng(123);
  ParamMap params{{"w", rand_tensor({4, 3}, rng)}, {"b", rand_tensor({3}, rng)}};
  auto fn = [](Graph& g, const ParamVars& p) {
    return g.sum_all(g.tanh_(g.add(p.at("w"), p.at("b"))));
  };
  auto a = value_and_grad(fn, params);
  auto b = value_and_grad(fn, params);
  EXPECT_EQ(std::memcmp(&a.value, &b.value, sizeof(double)), 0);
  for (const auto& [name, t] : a.grads) {
    const Tensor& u = b.grads.at(name);
    ASSERT_EQ(t.data.size(), u.data.size());
    EXPECT_EQ(std::memcmp(t.data.data(), u.data.data(),
                          t.data.size() * sizeof(double)),
              0);
  }
}

TEST(FiniteDiff, SquareFunctionTiny) {
  ParamMap params{{"w", Tensor::scalar(1.7)}};
  auto fn = [](Graph& g, const ParamVars& p) { return g.mul(p.at("w"), p.at("w")); };
  EXPECT_LT(finite_diff_check(fn, params, 1e-5), 1e-8);
}

TEST(FiniteDiff, ConstantFunctionIsExact) {
  ParamMap params{{"w", Tensor::scalar(0.4)}};
  auto fn = [](Graph& g, const ParamVars&) { return g.constant(Tensor::scalar(2.0)); };
  EXPECT_EQ(finite_diff_check(fn, params, 1e-5), 0.0);
}

TEST(FiniteDiff, TwoLayerMapSeventeenParameters) {
  SplitMix64 rng(2024);
  ParamMap params{{"w1", rand_tensor({2, 4}, rng)},
                  {"b1", rand_tensor({4}, rng)},
                  {"w2", rand_tensor({4, 1}, rng)},
                  {"b2", rand_tensor({1}, rng)}};
  std::size_t total = 0;
  for (const auto& [k, v] : params) total += v.numel();
  ASSERT_EQ(total, 17u);
  Tensor x = rand_tensor({3, 2}, rng);
  auto fn = [&](Graph& g, const ParamVars& p) {
    Var h = g.tanh_(g.add(g.matmul(g.constant(x), p.at("w1")), p.at("b1")));
    Var out = g.add(g.matmul(h, p.at("w2")), p.at("b2"));
    return g.sum_all(out);
  };
  EXPECT_LT(finite_diff_check(fn, params, 1e-5), 1e-4);
}

// Analytic gradients of every primitive against central differences on
// randomized small inputs.
TEST(PrimitiveGradients, Elementwise) {
  SplitMix64 rng(31);
  ParamMap params{{"a", rand_tensor({2, 3, 4}, rng)},
                  {"b", rand_tensor({2, 3, 4}, rng)},
                  {"suffix", rand_tensor({3, 4}, rng)}};
  EXPECT_LT(op_grad_error([](Graph& g, const ParamVars& p) {
              return g.add(p.at("a"), p.at("b"));
            }, params), 1e-6);
  EXPECT_LT(op_grad_error([](Graph& g, const ParamVars& p) {
              return g.sub(p.at("a"), p.at("b"));
            }, params), 1e-6);
  EXPECT_LT(op_grad_error([](Graph& g, const ParamVars& p) {
              return g.mul(p.at("a"), p.at("b"));
            }, params), 1e-6);
  EXPECT_LT(op_grad_error([](Graph& g, const ParamVars& p) {
              return g.mul(p.at("a"), p.at("suffix"));  // leading-batch broadcast
            }, params), 1e-6);
  EXPECT_LT(op_grad_error([](Graph& g, const ParamVars& p) {
              return g.add(p.at("suffix"), p.at("a"));  // smaller lhs
            }, params), 1e-6);
  EXPECT_LT(op_grad_error([](Graph& g, const ParamVars& p) {
              return g.affine(p.at("a"), -2.5, 0.75);
            }, params), 1e-6);
}

TEST(PrimitiveGradients, Nonlinearities) {
  SplitMix64 rng(32);
  ParamMap params{{"x", rand_tensor({3, 5}, rng)}};
  // keep relu inputs away from the kink
  for (double& v : params["x"].data) v += v >= 0.0 ? 0.1 : -0.1;
  ParamMap pos{{"x", rand_tensor({3, 5}, rng, 0.2, 2.0)}};
  EXPECT_LT(op_grad_error([](Graph& g, const ParamVars& p) { return g.relu(p.at("x")); },
                          params), 1e-6);
  EXPECT_LT(op_grad_error([](Graph& g, const ParamVars& p) { return g.tanh_(p.at("x")); },
                          params), 1e-6);
  EXPECT_LT(op_grad_error([](Graph& g, const ParamVars& p) { return g.sigmoid(p.at("x")); },
                          params), 1e-6);
  EXPECT_LT(op_grad_error([](Graph& g, const ParamVars& p) { return g.exp_(p.at("x")); },
                          params), 1e-6);
  EXPECT_LT(op_grad_error([](Graph& g, const ParamVars& p) {
              return g.log_(p.at("x"), 1e-12);
            }, pos), 1e-6);
  EXPECT_LT(op_grad_error([](Graph& g, const ParamVars& p) {
              return g.softmax(p.at("x"), 1);
            }, params), 1e-6);
}

TEST(PrimitiveGradients, MatmulVariants) {
  SplitMix64 rng(33);
  ParamMap params{{"a", rand_tensor({3, 4}, rng)},
                  {"b", rand_tensor({4, 2}, rng)},
                  {"ab", rand_tensor({5, 3, 4}, rng)},
                  {"bb", rand_tensor({5, 4, 2}, rng)}};
  EXPECT_LT(op_grad_error([](Graph& g, const ParamVars& p) {
              return g.matmul(p.at("a"), p.at("b"));
            }, params), 1e-6);
  EXPECT_LT(op_grad_error([](Graph& g, const ParamVars& p) {
              return g.matmul(p.at("ab"), p.at("bb"));  // batched
            }, params), 1e-6);
  EXPECT_LT(op_grad_error([](Graph& g, const ParamVars& p) {
              return g.matmul(p.at("ab"), p.at("b"));  // shared rhs
            }, params), 1e-6);
  EXPECT_LT(op_grad_error([](Graph& g, const ParamVars& p) {
              return g.matmul(p.at("a"), p.at("bb"));  // shared lhs
            }, params), 1e-6);
}

TEST(PrimitiveGradients, ShapeAndIndexOps) {
  SplitMix64 rng(34);
  ParamMap params{{"x", rand_tensor({2, 3, 4}, rng)},
                  {"y", rand_tensor({2, 5, 4}, rng)}};
  EXPECT_LT(op_grad_error([](Graph& g, const ParamVars& p) {
              return g.reshape(p.at("x"), {6, 4});
            }, params), 1e-6);
  EXPECT_LT(op_grad_error([](Graph& g, const ParamVars& p) {
              return g.permute(p.at("x"), {2, 0, 1});
            }, params), 1e-6);
  EXPECT_LT(op_grad_error([](Graph& g, const ParamVars& p) {
              return g.gather(p.at("x"), 1, {2, 0, 2});  // repeated index
            }, params), 1e-6);
  EXPECT_LT(op_grad_error([](Graph& g, const ParamVars& p) {
              return g.concat({p.at("x"), p.at("y")}, 1);
            }, params), 1e-6);
  EXPECT_LT(op_grad_error([](Graph& g, const ParamVars& p) {
              return g.reduce_sum(p.at("x"), {0, 2});
            }, params), 1e-6);
  EXPECT_LT(op_grad_error([](Graph& g, const ParamVars& p) {
              return g.reduce_mean(p.at("x"), {1});
            }, params), 1e-6);
}

TEST(PrimitiveGradients, UnfoldTime) {
  SplitMix64 rng(35);
  ParamMap params{{"x", rand_tensor({2, 3, 8, 4}, rng)}};
  for (std::size_t stride : {1, 2}) {
    EXPECT_LT(op_grad_error([stride](Graph& g, const ParamVars& p) {
                return g.unfold_time(p.at("x"), 3, stride, 1);
              }, params), 1e-6);
  }
}

TEST(PrimitiveGradients, BatchNormTrainingAndInference) {
  SplitMix64 rng(36);
  ParamMap params{{"x", rand_tensor({4, 3, 5}, rng)},
                  {"gamma", rand_tensor({3}, rng, 0.5, 1.5)},
                  {"beta", rand_tensor({3}, rng)}};
  Tensor rm = rand_tensor({3}, rng, -0.2, 0.2);
  Tensor rv = rand_tensor({3}, rng, 0.5, 1.5);
  Tensor mask({4}, {1, 0, 1, 1});
  EXPECT_LT(op_grad_error([&](Graph& g, const ParamVars& p) {
              BnSpec spec;
              spec.training = true;
              return g.batch_norm(p.at("x"), p.at("gamma"), p.at("beta"), spec);
            }, params), 1e-6);
  EXPECT_LT(op_grad_error([&](Graph& g, const ParamVars& p) {
              BnSpec spec;
              spec.training = true;
              spec.batch_mask = &mask;
              return g.batch_norm(p.at("x"), p.at("gamma"), p.at("beta"), spec);
            }, params), 1e-6);
  EXPECT_LT(op_grad_error([&](Graph& g, const ParamVars& p) {
              BnSpec spec;
              spec.training = false;
              spec.running_mean = &rm;
              spec.running_var = &rv;
              return g.batch_norm(p.at("x"), p.at("gamma"), p.at("beta"), spec);
            }, params), 1e-6);
}

TEST(BatchNorm, InferenceWithUnitStatsIsIdentityUpToAffine) {
  SplitMix64 rng(37);
  Tensor x = rand_tensor({2, 3, 4}, rng);
  Tensor rm = Tensor::zeros({3});
  Tensor rv = Tensor::full({3}, 1.0);
  Graph g;
  BnSpec spec;
  spec.training = false;
  spec.running_mean = &rm;
  spec.running_var = &rv;
  Var y = g.batch_norm(g.constant(x), g.constant(Tensor::full({3}, 1.0)),
                       g.constant(Tensor::zeros({3})), spec);
  for (std::size_t i = 0; i < x.numel(); ++i)
    EXPECT_NEAR(g.value(y).data[i], x.data[i], 1e-4);
}

TEST(BatchNorm, RunningStatsUpdate) {
  Tensor x({2, 1, 2}, {1.0, 3.0, 5.0, 7.0});  // mean 4, biased var 5
  Tensor rm = Tensor::zeros({1});
  Tensor rv = Tensor::full({1}, 1.0);
  Graph g;
  BnSpec spec;
  spec.training = true;
  spec.update_running = true;
  spec.momentum = 0.1;
  spec.running_mean = &rm;
  spec.running_var = &rv;
  g.batch_norm(g.constant(x), g.constant(Tensor::full({1}, 1.0)),
               g.constant(Tensor::zeros({1})), spec);
  EXPECT_NEAR(rm.data[0], 0.9 * 0.0 + 0.1 * 4.0, 1e-12);
  EXPECT_NEAR(rv.data[0], 0.9 * 1.0 + 0.1 * (5.0 * 4.0 / 3.0), 1e-12);
}
