#pragma once

#include "pegcn/autodiff.hpp"
#include "pegcn/common.hpp"
#include "pegcn/tensor.hpp"

namespace pegcn {

// SGD with momentum and weight decay:
//   v <- momentum * v + grad + weight_decay * param
//   param <- param - lr * v
// Velocity tensors are created on first use.
inline void sgd_step(ParamMap& params, const ParamMap& grads, ParamMap& velocity,
                     double lr, double momentum, double weight_decay) {
  for (auto& [name, p] : params) {
    auto git = grads.find(name);
    check(git != grads.end(), "sgd_step: missing gradient for " + name);
    const Tensor& grad = git->second;
    check(grad.shape == p.shape, "sgd_step: gradient shape " +
                                     shape_str(grad.shape) + " does not match " +
                                     name + " " + shape_str(p.shape));
    auto [vit, inserted] = velocity.try_emplace(name, Tensor::zeros(p.shape));
    Tensor& v = vit->second;
    if (!inserted)
      check(v.shape == p.shape, "sgd_step: velocity shape mismatch for " + name);
    for (std::size_t i = 0; i < p.numel(); ++i) {
      v.data[i] = momentum * v.data[i] + grad.data[i] + weight_decay * p.data[i];
      p.data[i] -= lr * v.data[i];
    }
  }
}

}  // namespace pegcn
