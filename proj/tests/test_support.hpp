#pragma once

#include <cstdint>
#include <vector>

#include "pegcn/autodiff.hpp"
#include "pegcn/rng.hpp"
#include "pegcn/tensor.hpp"

namespace pegcn::testing {

inline Tensor rand_tensor(std::vector<std::size_t> shape, SplitMix64& rng,
                          double lo = -1.0, double hi = 1.0) {
  return Tensor::uniform(std::move(shape), lo, hi, rng);
}

// Scalar readout: sum of the output weighted by a fixed random tensor, so
// every output entry influences the loss.
inline Var weighted_sum(Graph& g, Var v, std::uint64_t seed) {
  SplitMix64 rng(seed);
  Tensor w = Tensor::uniform(g.value(v).shape, -1.0, 1.0, rng);
  return g.sum_all(g.mul(v, g.constant(std::move(w))));
}

// Finite-difference check of a tensor-valued builder over a parameter set;
// the builder output is reduced with weighted_sum.
inline double op_grad_error(
    const std::function<Var(Graph&, const ParamVars&)>& build,
    const ParamMap& params, double eps = 1e-6) {
  auto fn = [&](Graph& g, const ParamVars& p) -> Var {
    return weighted_sum(g, build(g, p), 0xABCDEF);
  };
  return finite_diff_check(fn, params, eps);
}

}  // namespace pegcn::testing
