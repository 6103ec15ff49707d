#pragma once

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "pegcn/common.hpp"
#include "pegcn/rng.hpp"

namespace pegcn {

// Dense row-major real tensor, double precision. Rank 0 is a scalar
// (empty shape, one element).
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<std::size_t> s, std::vector<double> d)
      : shape(std::move(s)), data(std::move(d)) {
    check(numel_of(shape) == data.size(),
          "tensor: shape " + shape_str(shape) + " does not match data length");
  }

  static std::size_t numel_of(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (std::size_t e : s) {
      check(e > 0, "tensor: zero extent in shape " + shape_str(s));
      n *= e;
    }
    return n;
  }

  static Tensor zeros(std::vector<std::size_t> s) {
    std::size_t n = numel_of(s);
    return Tensor(std::move(s), std::vector<double>(n, 0.0));
  }

  static Tensor full(std::vector<std::size_t> s, double v) {
    std::size_t n = numel_of(s);
    return Tensor(std::move(s), std::vector<double>(n, v));
  }

  static Tensor scalar(double v) { return Tensor({}, {v}); }

  // entries i.i.d. uniform in [lo,hi)
  static Tensor uniform(std::vector<std::size_t> s, double lo, double hi,
                        SplitMix64& rng) {
    std::size_t n = numel_of(s);
    std::vector<double> d(n);
    for (double& x : d) x = rng.uniform(lo, hi);
    return Tensor(std::move(s), std::move(d));
  }

  std::size_t numel() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }

  double& at(std::initializer_list<std::size_t> idx) {
    return data[offset(idx)];
  }
  double at(std::initializer_list<std::size_t> idx) const {
    return data[offset(idx)];
  }

  std::size_t offset(std::initializer_list<std::size_t> idx) const {
    check(idx.size() == shape.size(), "tensor: index rank mismatch");
    std::size_t off = 0, ax = 0;
    for (std::size_t i : idx) {
      check(i < shape[ax], "tensor: index out of range");
      off = off * shape[ax] + i;
      ++ax;
    }
    return off;
  }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

inline bool same_shape(const Tensor& a, const Tensor& b) {
  return a.shape == b.shape;
}

}  // namespace pegcn
