#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "pegcn/common.hpp"
#include "pegcn/tensor.hpp"

namespace pegcn {

// Handle into a Graph's tape.
struct Var {
  std::uint32_t id = 0;
};

namespace detail {

// C[m,n] += A[m,k] * B[k,n]
inline void mm_acc(const double* A, const double* B, double* C, std::size_t m,
                   std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* a = A + i * k;
    double* c = C + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[p];
      const double* b = B + p * n;
      for (std::size_t j = 0; j < n; ++j) c[j] += av * b[j];
    }
  }
}

// C[m,n] += A[m,k] * B[n,k]^T
inline void mm_acc_nt(const double* A, const double* B, double* C,
                      std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* a = A + i * k;
    double* c = C + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* b = B + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[p] * b[p];
      c[j] += acc;
    }
  }
}

// C[m,n] += A[k,m]^T * B[k,n]
inline void mm_acc_tn(const double* A, const double* B, double* C,
                      std::size_t k, std::size_t m, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    const double* a = A + p * m;
    const double* b = B + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = a[i];
      double* c = C + i * n;
      for (std::size_t j = 0; j < n; ++j) c[j] += av * b[j];
    }
  }
}

}  // namespace detail

// Batch-norm mode and state. Training mode normalizes with batch
// statistics (optionally weighted by a {0,1} mask over the batch axis) and
// can update running statistics in place; inference mode normalizes with
// the supplied running statistics.
struct BnSpec {
  bool training = true;
  double momentum = 0.1;
  double eps = 1e-5;
  Tensor* running_mean = nullptr;
  Tensor* running_var = nullptr;
  bool update_running = false;
  const Tensor* batch_mask = nullptr;  // shape [N]; absent means all ones
};

// Recording tape. Build an expression with the op methods, then call
// backward(loss) once; gradients accumulate per node. Ops broadcast only
// when one operand's shape is a suffix of the other's (leading batch
// dimensions tile the smaller operand); there is no general broadcasting.
class Graph {
 public:
  Var constant(Tensor t) { return push("const", std::move(t), {}, nullptr); }

  Var param(const std::string& name, Tensor t) {
    check(params_.find(name) == params_.end(),
          "param: duplicate parameter name " + name);
    Var v = push("param", std::move(t), {}, nullptr);
    params_[name] = v.id;
    return v;
  }

  const Tensor& value(Var v) const { return nodes_[v.id].value; }

  double scalar_value(Var v) const {
    const Tensor& t = nodes_[v.id].value;
    check(t.numel() == 1, "scalar: node is not a scalar, shape " +
                              shape_str(t.shape));
    return t.data[0];
  }

  // ---- elementwise -------------------------------------------------------

  Var add(Var a, Var b) { return binary_ew("add", a, b, /*is_mul=*/false, 1.0); }
  Var sub(Var a, Var b) { return binary_ew("sub", a, b, /*is_mul=*/false, -1.0); }
  Var mul(Var a, Var b) { return binary_ew("mul", a, b, /*is_mul=*/true, 1.0); }

  // k*a + c, elementwise
  Var affine(Var a, double k, double c) {
    const Tensor& x = value(a);
    Tensor out = x;
    for (double& v : out.data) v = k * v + c;
    auto ida = a.id;
    return push("affine", std::move(out), {a.id}, [ida, k](Graph& g, std::uint32_t self) {
      const Tensor& go = g.grads_[self];
      Tensor& ga = g.grads_[ida];
      for (std::size_t i = 0; i < go.data.size(); ++i) ga.data[i] += k * go.data[i];
    });
  }

  Var neg(Var a) { return affine(a, -1.0, 0.0); }
  Var scale(Var a, double k) { return affine(a, k, 0.0); }

  Var relu(Var a) {
    const Tensor& x = value(a);
    Tensor out = x;
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    auto ida = a.id;
    return push("relu", std::move(out), {a.id}, [ida](Graph& g, std::uint32_t self) {
      const Tensor& go = g.grads_[self];
      const Tensor& x = g.nodes_[ida].value;
      Tensor& ga = g.grads_[ida];
      for (std::size_t i = 0; i < go.data.size(); ++i)
        if (x.data[i] > 0.0) ga.data[i] += go.data[i];
    });
  }

  Var tanh_(Var a) {
    const Tensor& x = value(a);
    Tensor out = x;
    for (double& v : out.data) v = std::tanh(v);
    auto ida = a.id;
    return push("tanh", std::move(out), {a.id}, [ida](Graph& g, std::uint32_t self) {
      const Tensor& go = g.grads_[self];
      const Tensor& y = g.nodes_[self].value;
      Tensor& ga = g.grads_[ida];
      for (std::size_t i = 0; i < go.data.size(); ++i)
        ga.data[i] += go.data[i] * (1.0 - y.data[i] * y.data[i]);
    });
  }

  Var sigmoid(Var a) {
    const Tensor& x = value(a);
    Tensor out = x;
    for (double& v : out.data) {
      if (v >= 0.0) {
        v = 1.0 / (1.0 + std::exp(-v));
      } else {
        double e = std::exp(v);
        v = e / (1.0 + e);
      }
    }
    auto ida = a.id;
    return push("sigmoid", std::move(out), {a.id}, [ida](Graph& g, std::uint32_t self) {
      const Tensor& go = g.grads_[self];
      const Tensor& y = g.nodes_[self].value;
      Tensor& ga = g.grads_[ida];
      for (std::size_t i = 0; i < go.data.size(); ++i)
        ga.data[i] += go.data[i] * y.data[i] * (1.0 - y.data[i]);
    });
  }

  Var exp_(Var a) {
    const Tensor& x = value(a);
    Tensor out = x;
    for (double& v : out.data) v = std::exp(v);
    auto ida = a.id;
    return push("exp", std::move(out), {a.id}, [ida](Graph& g, std::uint32_t self) {
      const Tensor& go = g.grads_[self];
      const Tensor& y = g.nodes_[self].value;
      Tensor& ga = g.grads_[ida];
      for (std::size_t i = 0; i < go.data.size(); ++i)
        ga.data[i] += go.data[i] * y.data[i];
    });
  }

  // log(max(x, floor)); floor 0 is the plain logarithm. Entries at or
  // below the floor get zero gradient.
  Var log_(Var a, double floor = 0.0) {
    const Tensor& x = value(a);
    Tensor out = x;
    for (double& v : out.data) v = std::log(v < floor ? floor : v);
    auto ida = a.id;
    return push("log", std::move(out), {a.id}, [ida, floor](Graph& g, std::uint32_t self) {
      const Tensor& go = g.grads_[self];
      const Tensor& x = g.nodes_[ida].value;
      Tensor& ga = g.grads_[ida];
      for (std::size_t i = 0; i < go.data.size(); ++i)
        if (x.data[i] > floor || (floor == 0.0 && x.data[i] > 0.0))
          ga.data[i] += go.data[i] / x.data[i];
    });
  }

  // ---- matmul ------------------------------------------------------------

  // [..,m,k] x [..,k,n] -> [..,m,n]; leading dims must match exactly or be
  // absent on one side (that side is reused for every batch).
  Var matmul(Var a, Var b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    check(A.rank() >= 2 && B.rank() >= 2,
          "matmul: operands must have rank >= 2, got " + shape_str(A.shape) +
              " and " + shape_str(B.shape));
    std::size_t m = A.shape[A.rank() - 2];
    std::size_t k = A.shape[A.rank() - 1];
    std::size_t kb = B.shape[B.rank() - 2];
    std::size_t n = B.shape[B.rank() - 1];
    check(k == kb, "matmul: inner dimensions differ, lhs " +
                       shape_str(A.shape) + " rhs " + shape_str(B.shape));
    std::vector<std::size_t> la(A.shape.begin(), A.shape.end() - 2);
    std::vector<std::size_t> lb(B.shape.begin(), B.shape.end() - 2);
    check(la == lb || la.empty() || lb.empty(),
          "matmul: leading dimensions differ, lhs " + shape_str(A.shape) +
              " rhs " + shape_str(B.shape));
    const std::vector<std::size_t>& lead = la.empty() ? lb : la;
    std::size_t batches = 1;
    for (std::size_t e : lead) batches *= e;
    std::size_t sa = la.empty() ? 0 : m * k;
    std::size_t sb = lb.empty() ? 0 : k * n;

    std::vector<std::size_t> oshape = lead;
    oshape.push_back(m);
    oshape.push_back(n);
    Tensor out = Tensor::zeros(oshape);
    for (std::size_t bt = 0; bt < batches; ++bt)
      detail::mm_acc(A.data.data() + bt * sa, B.data.data() + bt * sb,
                     out.data.data() + bt * m * n, m, k, n);

    auto ida = a.id, idb = b.id;
    return push("matmul", std::move(out), {a.id, b.id},
                [ida, idb, m, k, n, batches, sa, sb](Graph& g, std::uint32_t self) {
                  const Tensor& go = g.grads_[self];
                  const Tensor& A = g.nodes_[ida].value;
                  const Tensor& B = g.nodes_[idb].value;
                  Tensor& ga = g.grads_[ida];
                  Tensor& gb = g.grads_[idb];
                  for (std::size_t bt = 0; bt < batches; ++bt) {
                    const double* dC = go.data.data() + bt * m * n;
                    detail::mm_acc_nt(dC, B.data.data() + bt * sb,
                                      ga.data.data() + bt * sa, m, n, k);
                    detail::mm_acc_tn(A.data.data() + bt * sa, dC,
                                      gb.data.data() + bt * sb, m, k, n);
                  }
                });
  }

  // ---- softmax -----------------------------------------------------------

  Var softmax(Var a, std::size_t axis) {
    const Tensor& x = value(a);
    check(axis < x.rank(), "softmax: axis " + std::to_string(axis) +
                               " out of range for " + shape_str(x.shape));
    auto [outer, extent, inner] = axis_split(x.shape, axis);
    Tensor out = x;
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        double* base = out.data.data() + o * extent * inner + in;
        double mx = base[0];
        for (std::size_t i = 1; i < extent; ++i)
          mx = std::max(mx, base[i * inner]);
        double sum = 0.0;
        for (std::size_t i = 0; i < extent; ++i) {
          double e = std::exp(base[i * inner] - mx);
          base[i * inner] = e;
          sum += e;
        }
        for (std::size_t i = 0; i < extent; ++i) base[i * inner] /= sum;
      }
    }
    auto ida = a.id;
    return push("softmax", std::move(out), {a.id},
                [ida, outer, extent, inner](Graph& g, std::uint32_t self) {
                  const Tensor& go = g.grads_[self];
                  const Tensor& y = g.nodes_[self].value;
                  Tensor& ga = g.grads_[ida];
                  for (std::size_t o = 0; o < outer; ++o) {
                    for (std::size_t in = 0; in < inner; ++in) {
                      std::size_t base = o * extent * inner + in;
                      double dot = 0.0;
                      for (std::size_t i = 0; i < extent; ++i) {
                        std::size_t at = base + i * inner;
                        dot += go.data[at] * y.data[at];
                      }
                      for (std::size_t i = 0; i < extent; ++i) {
                        std::size_t at = base + i * inner;
                        ga.data[at] += y.data[at] * (go.data[at] - dot);
                      }
                    }
                  }
                });
  }

  // ---- reductions --------------------------------------------------------

  Var reduce_sum(Var a, std::vector<std::size_t> axes) {
    return reduce(a, std::move(axes), /*mean=*/false);
  }
  Var reduce_mean(Var a, std::vector<std::size_t> axes) {
    return reduce(a, std::move(axes), /*mean=*/true);
  }

  Var sum_all(Var a) { return reduce_sum(a, all_axes(a)); }
  Var mean_all(Var a) { return reduce_mean(a, all_axes(a)); }

  // ---- shape ops ---------------------------------------------------------

  Var reshape(Var a, std::vector<std::size_t> shape) {
    const Tensor& x = value(a);
    check(Tensor::numel_of(shape) == x.numel(),
          "reshape: cannot view " + shape_str(x.shape) + " as " +
              shape_str(shape));
    Tensor out(shape, x.data);
    auto ida = a.id;
    return push("reshape", std::move(out), {a.id}, [ida](Graph& g, std::uint32_t self) {
      const Tensor& go = g.grads_[self];
      Tensor& ga = g.grads_[ida];
      for (std::size_t i = 0; i < go.data.size(); ++i) ga.data[i] += go.data[i];
    });
  }

  Var permute(Var a, std::vector<std::size_t> perm) {
    const Tensor& x = value(a);
    check(perm.size() == x.rank(), "permute: perm rank mismatch for " +
                                       shape_str(x.shape));
    std::vector<bool> seen(perm.size(), false);
    for (std::size_t p : perm) {
      check(p < perm.size() && !seen[p], "permute: invalid permutation");
      seen[p] = true;
    }
    std::vector<std::size_t> oshape(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) oshape[i] = x.shape[perm[i]];
    std::vector<std::size_t> map = permute_map(x.shape, perm);
    Tensor out = Tensor::zeros(oshape);
    for (std::size_t i = 0; i < x.numel(); ++i) out.data[i] = x.data[map[i]];
    auto ida = a.id;
    return push("permute", std::move(out), {a.id},
                [ida, map = std::move(map)](Graph& g, std::uint32_t self) {
                  const Tensor& go = g.grads_[self];
                  Tensor& ga = g.grads_[ida];
                  for (std::size_t i = 0; i < go.data.size(); ++i)
                    ga.data[map[i]] += go.data[i];
                });
  }

  Var gather(Var a, std::size_t axis, std::vector<std::size_t> indices) {
    const Tensor& x = value(a);
    check(axis < x.rank(), "gather: axis out of range for " + shape_str(x.shape));
    check(!indices.empty(), "gather: empty index list");
    for (std::size_t i : indices)
      check(i < x.shape[axis], "gather: index " + std::to_string(i) +
                                   " out of range for " + shape_str(x.shape));
    auto [outer, extent, inner] = axis_split(x.shape, axis);
    std::vector<std::size_t> oshape = x.shape;
    oshape[axis] = indices.size();
    Tensor out = Tensor::zeros(oshape);
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t i = 0; i < indices.size(); ++i)
        for (std::size_t in = 0; in < inner; ++in)
          out.data[(o * indices.size() + i) * inner + in] =
              x.data[(o * extent + indices[i]) * inner + in];
    auto ida = a.id;
    return push("gather", std::move(out), {a.id},
                [ida, outer, extent, inner, indices = std::move(indices)](
                    Graph& g, std::uint32_t self) {
                  const Tensor& go = g.grads_[self];
                  Tensor& ga = g.grads_[ida];
                  for (std::size_t o = 0; o < outer; ++o)
                    for (std::size_t i = 0; i < indices.size(); ++i)
                      for (std::size_t in = 0; in < inner; ++in)
                        ga.data[(o * extent + indices[i]) * inner + in] +=
                            go.data[(o * indices.size() + i) * inner + in];
                });
  }

  Var concat(const std::vector<Var>& items, std::size_t axis) {
    check(!items.empty(), "concat: no operands");
    const Tensor& first = value(items[0]);
    check(axis < first.rank(), "concat: axis out of range");
    std::size_t total = 0;
    for (Var v : items) {
      const Tensor& t = value(v);
      check(t.rank() == first.rank(), "concat: rank mismatch");
      for (std::size_t ax = 0; ax < t.rank(); ++ax)
        check(ax == axis || t.shape[ax] == first.shape[ax],
              "concat: shape mismatch " + shape_str(t.shape) + " vs " +
                  shape_str(first.shape));
      total += t.shape[axis];
    }
    std::vector<std::size_t> oshape = first.shape;
    oshape[axis] = total;
    auto [outer, extent, inner] = axis_split(oshape, axis);
    (void)extent;
    Tensor out = Tensor::zeros(oshape);
    std::vector<std::uint32_t> ids;
    std::vector<std::size_t> extents;
    std::size_t off = 0;
    for (Var v : items) {
      const Tensor& t = value(v);
      std::size_t e = t.shape[axis];
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < e; ++i)
          for (std::size_t in = 0; in < inner; ++in)
            out.data[(o * total + off + i) * inner + in] =
                t.data[(o * e + i) * inner + in];
      ids.push_back(v.id);
      extents.push_back(e);
      off += e;
    }
    return push("concat", std::move(out), ids,
                [ids, extents, outer, inner, total](Graph& g, std::uint32_t self) {
                  const Tensor& go = g.grads_[self];
                  std::size_t off = 0;
                  for (std::size_t p = 0; p < ids.size(); ++p) {
                    Tensor& ga = g.grads_[ids[p]];
                    std::size_t e = extents[p];
                    for (std::size_t o = 0; o < outer; ++o)
                      for (std::size_t i = 0; i < e; ++i)
                        for (std::size_t in = 0; in < inner; ++in)
                          ga.data[(o * e + i) * inner + in] +=
                              go.data[(o * total + off + i) * inner + in];
                    off += e;
                  }
                });
  }

  // ---- temporal unfold ---------------------------------------------------

  // x [N,C,T,V] -> [N, C*kernel, T_out, V] with zero padding; together with
  // matmul this expresses 1-D convolution along the time axis.
  Var unfold_time(Var a, std::size_t kernel, std::size_t stride, std::size_t pad) {
    const Tensor& x = value(a);
    check(x.rank() == 4, "unfold_time: expected rank-4 [N,C,T,V], got " +
                             shape_str(x.shape));
    check(kernel >= 1 && stride >= 1, "unfold_time: kernel and stride must be >= 1");
    std::size_t N = x.shape[0], C = x.shape[1], T = x.shape[2], V = x.shape[3];
    check(T + 2 * pad >= kernel, "unfold_time: kernel larger than padded length");
    std::size_t t_out = (T + 2 * pad - kernel) / stride + 1;
    Tensor out = Tensor::zeros({N, C * kernel, t_out, V});
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t j = 0; j < kernel; ++j)
          for (std::size_t t = 0; t < t_out; ++t) {
            std::ptrdiff_t src_t = static_cast<std::ptrdiff_t>(t * stride + j) -
                                   static_cast<std::ptrdiff_t>(pad);
            if (src_t < 0 || src_t >= static_cast<std::ptrdiff_t>(T)) continue;
            const double* src =
                x.data.data() + ((n * C + c) * T + src_t) * V;
            double* dst =
                out.data.data() + ((n * C * kernel + c * kernel + j) * t_out + t) * V;
            for (std::size_t v = 0; v < V; ++v) dst[v] = src[v];
          }
    auto ida = a.id;
    return push("unfold_time", std::move(out), {a.id},
                [ida, kernel, stride, pad, N, C, T, V, t_out](Graph& g,
                                                              std::uint32_t self) {
                  const Tensor& go = g.grads_[self];
                  Tensor& ga = g.grads_[ida];
                  for (std::size_t n = 0; n < N; ++n)
                    for (std::size_t c = 0; c < C; ++c)
                      for (std::size_t j = 0; j < kernel; ++j)
                        for (std::size_t t = 0; t < t_out; ++t) {
                          std::ptrdiff_t src_t =
                              static_cast<std::ptrdiff_t>(t * stride + j) -
                              static_cast<std::ptrdiff_t>(pad);
                          if (src_t < 0 || src_t >= static_cast<std::ptrdiff_t>(T))
                            continue;
                          double* dst =
                              ga.data.data() + ((n * C + c) * T + src_t) * V;
                          const double* src =
                              go.data.data() +
                              ((n * C * kernel + c * kernel + j) * t_out + t) * V;
                          for (std::size_t v = 0; v < V; ++v) dst[v] += src[v];
                        }
                });
  }

  // ---- batch normalization ----------------------------------------------

  // x [N,C,...], normalized per channel (axis 1) over batch and all
  // trailing axes. gamma/beta are [C].
  Var batch_norm(Var xv, Var gammav, Var betav, const BnSpec& spec) {
    const Tensor& x = value(xv);
    const Tensor& gamma = value(gammav);
    const Tensor& beta = value(betav);
    check(x.rank() >= 2, "batch_norm: input rank must be >= 2, got " +
                             shape_str(x.shape));
    std::size_t N = x.shape[0], C = x.shape[1];
    std::size_t inner = x.numel() / (N * C);
    check(gamma.shape == std::vector<std::size_t>{C} &&
              beta.shape == std::vector<std::size_t>{C},
          "batch_norm: gamma/beta must be [C]");
    std::vector<double> mask(N, 1.0);
    if (spec.batch_mask) {
      check(spec.batch_mask->shape == std::vector<std::size_t>{N},
            "batch_norm: mask must be [N]");
      mask = spec.batch_mask->data;
    }
    double mask_total = 0.0;
    for (double m : mask) mask_total += m;
    check(mask_total > 0.0, "batch_norm: all batch entries masked out");
    double count = mask_total * static_cast<double>(inner);

    std::vector<double> mean(C, 0.0), var(C, 0.0);
    if (spec.training) {
      for (std::size_t n = 0; n < N; ++n) {
        if (mask[n] == 0.0) continue;
        for (std::size_t c = 0; c < C; ++c) {
          const double* p = x.data.data() + (n * C + c) * inner;
          double s = 0.0;
          for (std::size_t i = 0; i < inner; ++i) s += p[i];
          mean[c] += s;
        }
      }
      for (std::size_t c = 0; c < C; ++c) mean[c] /= count;
      for (std::size_t n = 0; n < N; ++n) {
        if (mask[n] == 0.0) continue;
        for (std::size_t c = 0; c < C; ++c) {
          const double* p = x.data.data() + (n * C + c) * inner;
          double s = 0.0;
          for (std::size_t i = 0; i < inner; ++i) {
            double d = p[i] - mean[c];
            s += d * d;
          }
          var[c] += s;
        }
      }
      for (std::size_t c = 0; c < C; ++c) var[c] /= count;
      if (spec.update_running) {
        check(spec.running_mean && spec.running_var,
              "batch_norm: running stats required for update");
        for (std::size_t c = 0; c < C; ++c) {
          double unbiased = count > 1.0 ? var[c] * count / (count - 1.0) : var[c];
          spec.running_mean->data[c] =
              (1.0 - spec.momentum) * spec.running_mean->data[c] +
              spec.momentum * mean[c];
          spec.running_var->data[c] =
              (1.0 - spec.momentum) * spec.running_var->data[c] +
              spec.momentum * unbiased;
        }
      }
    } else {
      check(spec.running_mean && spec.running_var,
            "batch_norm: running stats required in inference mode");
      mean = spec.running_mean->data;
      var = spec.running_var->data;
    }

    std::vector<double> inv_std(C);
    for (std::size_t c = 0; c < C; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + spec.eps);

    Tensor out = Tensor::zeros(x.shape);
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t c = 0; c < C; ++c) {
        const double* p = x.data.data() + (n * C + c) * inner;
        double* q = out.data.data() + (n * C + c) * inner;
        double g = gamma.data[c], b = beta.data[c], mu = mean[c], is = inv_std[c];
        for (std::size_t i = 0; i < inner; ++i) q[i] = g * (p[i] - mu) * is + b;
      }

    auto idx = xv.id, idg = gammav.id, idb = betav.id;
    bool training = spec.training;
    return push(
        "batch_norm", std::move(out), {xv.id, gammav.id, betav.id},
        [idx, idg, idb, N, C, inner, mean, inv_std, mask, count, training](
            Graph& g, std::uint32_t self) {
          const Tensor& go = g.grads_[self];
          const Tensor& x = g.nodes_[idx].value;
          const Tensor& gamma = g.nodes_[idg].value;
          Tensor& gx = g.grads_[idx];
          Tensor& gg = g.grads_[idg];
          Tensor& gb = g.grads_[idb];
          for (std::size_t c = 0; c < C; ++c) {
            double mu = mean[c], is = inv_std[c];
            double sum_dy = 0.0, sum_dy_xhat = 0.0;       // over all entries
            double msum_dy = 0.0, msum_dy_xhat = 0.0;     // over unmasked entries
            for (std::size_t n = 0; n < N; ++n) {
              const double* p = x.data.data() + (n * C + c) * inner;
              const double* dy = go.data.data() + (n * C + c) * inner;
              double local_dy = 0.0, local_dyx = 0.0;
              for (std::size_t i = 0; i < inner; ++i) {
                double xhat = (p[i] - mu) * is;
                local_dy += dy[i];
                local_dyx += dy[i] * xhat;
              }
              sum_dy += local_dy;
              sum_dy_xhat += local_dyx;
              if (mask[n] != 0.0) {
                msum_dy += local_dy;
                msum_dy_xhat += local_dyx;
              }
            }
            gg.data[c] += sum_dy_xhat;
            gb.data[c] += sum_dy;
            double gm = gamma.data[c];
            if (training) {
              // d mean and d var flow only into unmasked entries
              for (std::size_t n = 0; n < N; ++n) {
                const double* p = x.data.data() + (n * C + c) * inner;
                const double* dy = go.data.data() + (n * C + c) * inner;
                double* dx = gx.data.data() + (n * C + c) * inner;
                bool in_stats = mask[n] != 0.0;
                for (std::size_t i = 0; i < inner; ++i) {
                  double xhat = (p[i] - mu) * is;
                  double v = dy[i];
                  if (in_stats)
                    v -= (sum_dy + xhat * sum_dy_xhat) / count;
                  dx[i] += gm * is * v;
                }
              }
            } else {
              for (std::size_t n = 0; n < N; ++n) {
                const double* dy = go.data.data() + (n * C + c) * inner;
                double* dx = gx.data.data() + (n * C + c) * inner;
                for (std::size_t i = 0; i < inner; ++i) dx[i] += gm * is * dy[i];
              }
            }
          }
        });
  }

  // ---- backward ----------------------------------------------------------

  // Reverse sweep from a scalar loss. Throws if the loss (or any primitive
  // output, when the loss is non-finite) is not finite.
  void backward(Var loss) {
    const Tensor& lv = value(loss);
    check(lv.numel() == 1, "backward: loss must be scalar, got " +
                               shape_str(lv.shape));
    if (!std::isfinite(lv.data[0])) throw_first_non_finite();
    grads_.clear();
    grads_.reserve(nodes_.size());
    for (const Node& n : nodes_) grads_.push_back(Tensor::zeros(n.value.shape));
    grads_[loss.id].data[0] = 1.0;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      if (nodes_[i].backward) nodes_[i].backward(*this, static_cast<std::uint32_t>(i));
    }
  }

  const Tensor& grad(Var v) const {
    check(!grads_.empty(), "grad: backward has not been run");
    return grads_[v.id];
  }

  // Gradient for a registered parameter; all-zero if it did not influence
  // the loss.
  const Tensor& grad_of(const std::string& name) const {
    auto it = params_.find(name);
    check(it != params_.end(), "grad_of: unknown parameter " + name);
    check(!grads_.empty(), "grad_of: backward has not been run");
    return grads_[it->second];
  }

  Var param_var(const std::string& name) const {
    auto it = params_.find(name);
    check(it != params_.end(), "param_var: unknown parameter " + name);
    return Var{it->second};
  }

  const std::map<std::string, std::uint32_t>& params() const { return params_; }

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    const char* op;
    std::function<void(Graph&, std::uint32_t)> backward;
  };

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
  std::map<std::string, std::uint32_t> params_;

  Var push(const char* op, Tensor value, std::vector<std::uint32_t> parents,
           std::function<void(Graph&, std::uint32_t)> backward) {
    (void)parents;
    nodes_.push_back(Node{std::move(value), op, std::move(backward)});
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
  }

  [[noreturn]] void throw_first_non_finite() const {
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (!nodes_[i].value.all_finite())
        throw NumericError(
            std::string("non-finite value: first produced by primitive '") +
            nodes_[i].op + "' at node " + std::to_string(i) + " with shape " +
            shape_str(nodes_[i].value.shape));
    }
    throw NumericError("non-finite loss with no non-finite primitive output");
  }

  static std::tuple<std::size_t, std::size_t, std::size_t> axis_split(
      const std::vector<std::size_t>& shape, std::size_t axis) {
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
    return {outer, shape[axis], inner};
  }

  std::vector<std::size_t> all_axes(Var a) const {
    std::vector<std::size_t> axes(value(a).rank());
    for (std::size_t i = 0; i < axes.size(); ++i) axes[i] = i;
    return axes;
  }

  // out[i] = in[map[i]] for the permuted layout
  static std::vector<std::size_t> permute_map(
      const std::vector<std::size_t>& shape, const std::vector<std::size_t>& perm) {
    std::size_t rank = shape.size();
    std::vector<std::size_t> in_strides(rank, 1);
    for (std::size_t i = rank; i-- > 1;)
      in_strides[i - 1] = in_strides[i] * shape[i];
    std::vector<std::size_t> oshape(rank);
    for (std::size_t i = 0; i < rank; ++i) oshape[i] = shape[perm[i]];
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    std::vector<std::size_t> map(n);
    std::vector<std::size_t> idx(rank, 0);
    for (std::size_t lin = 0; lin < n; ++lin) {
      std::size_t src = 0;
      for (std::size_t i = 0; i < rank; ++i) src += idx[i] * in_strides[perm[i]];
      map[lin] = src;
      for (std::size_t ax = rank; ax-- > 0;) {
        if (++idx[ax] < oshape[ax]) break;
        idx[ax] = 0;
      }
    }
    return map;
  }

  // suffix-only broadcast; the smaller operand tiles over leading dims
  Var binary_ew(const char* op, Var a, Var b, bool is_mul, double sign_b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    bool a_big = A.numel() >= B.numel();
    const Tensor& big = a_big ? A : B;
    const Tensor& small = a_big ? B : A;
    bool suffix = small.rank() <= big.rank() &&
                  std::equal(small.shape.begin(), small.shape.end(),
                             big.shape.end() - small.rank());
    check(suffix, std::string(op) + ": shapes " + shape_str(A.shape) + " and " +
                      shape_str(B.shape) +
                      " do not match (only leading-batch broadcast is allowed)");
    std::size_t sn = small.numel();
    Tensor out = Tensor::zeros(big.shape);
    if (is_mul) {
      for (std::size_t i = 0; i < big.numel(); ++i)
        out.data[i] = A.data[a_big ? i : i % sn] * B.data[a_big ? i % sn : i];
    } else {
      for (std::size_t i = 0; i < big.numel(); ++i)
        out.data[i] = A.data[a_big ? i : i % sn] +
                      sign_b * B.data[a_big ? i % sn : i];
    }
    auto ida = a.id, idb = b.id;
    return push(op, std::move(out), {a.id, b.id},
                [ida, idb, a_big, sn, is_mul, sign_b](Graph& g, std::uint32_t self) {
                  const Tensor& go = g.grads_[self];
                  const Tensor& A = g.nodes_[ida].value;
                  const Tensor& B = g.nodes_[idb].value;
                  Tensor& ga = g.grads_[ida];
                  Tensor& gb = g.grads_[idb];
                  std::size_t n = go.numel();
                  for (std::size_t i = 0; i < n; ++i) {
                    double d = go.data[i];
                    std::size_t ia = a_big ? i : i % sn;
                    std::size_t ib = a_big ? i % sn : i;
                    if (is_mul) {
                      ga.data[ia] += d * B.data[ib];
                      gb.data[ib] += d * A.data[ia];
                    } else {
                      ga.data[ia] += d;
                      gb.data[ib] += sign_b * d;
                    }
                  }
                });
  }

  Var reduce(Var a, std::vector<std::size_t> axes, bool mean) {
    const Tensor& x = value(a);
    std::sort(axes.begin(), axes.end());
    check(std::unique(axes.begin(), axes.end()) == axes.end(),
          "reduce: duplicate axes");
    for (std::size_t ax : axes)
      check(ax < x.rank(), "reduce: axis " + std::to_string(ax) +
                               " out of range for " + shape_str(x.shape));
    std::size_t rank = x.rank();
    std::vector<bool> reduced(rank, false);
    std::size_t count = 1;
    for (std::size_t ax : axes) {
      reduced[ax] = true;
      count *= x.shape[ax];
    }
    std::vector<std::size_t> oshape;
    for (std::size_t i = 0; i < rank; ++i)
      if (!reduced[i]) oshape.push_back(x.shape[i]);
    std::vector<std::size_t> ostrides(rank, 0);
    {
      std::size_t stride = 1;
      for (std::size_t i = rank; i-- > 0;) {
        if (!reduced[i]) {
          ostrides[i] = stride;
          stride *= x.shape[i];
        }
      }
    }
    double k = mean ? 1.0 / static_cast<double>(count) : 1.0;
    Tensor out = Tensor::zeros(oshape);
    std::vector<std::size_t> idx(rank, 0);
    std::size_t olin = 0;
    for (std::size_t lin = 0; lin < x.numel(); ++lin) {
      out.data[olin] += k * x.data[lin];
      for (std::size_t ax = rank; ax-- > 0;) {
        ++idx[ax];
        olin += ostrides[ax];
        if (idx[ax] < x.shape[ax]) break;
        olin -= ostrides[ax] * x.shape[ax];
        idx[ax] = 0;
      }
    }
    auto ida = a.id;
    auto shape = x.shape;
    return push(mean ? "mean" : "sum", std::move(out), {a.id},
                [ida, shape = std::move(shape), ostrides = std::move(ostrides), k](
                    Graph& g, std::uint32_t self) {
                  const Tensor& go = g.grads_[self];
                  Tensor& ga = g.grads_[ida];
                  std::size_t rank = shape.size();
                  std::vector<std::size_t> idx(rank, 0);
                  std::size_t olin = 0;
                  for (std::size_t lin = 0; lin < ga.numel(); ++lin) {
                    ga.data[lin] += k * go.data[olin];
                    for (std::size_t ax = rank; ax-- > 0;) {
                      ++idx[ax];
                      olin += ostrides[ax];
                      if (idx[ax] < shape[ax]) break;
                      olin -= ostrides[ax] * shape[ax];
                      idx[ax] = 0;
                    }
                  }
                });
  }
};

// ---- value_and_grad / finite_diff_check -----------------------------------

using ParamMap = std::map<std::string, Tensor>;
using ParamVars = std::map<std::string, Var>;
using LossFn = std::function<Var(Graph&, const ParamVars&)>;

struct ValueAndGrad {
  double value = 0.0;
  ParamMap grads;
};

// Evaluates the loss expression once and returns the loss value plus one
// gradient tensor per parameter (all-zero for parameters the loss does not
// depend on). Deterministic: identical inputs give bitwise-identical
// outputs in single-threaded execution.
inline ValueAndGrad value_and_grad(const LossFn& loss_fn, const ParamMap& params) {
  Graph g;
  ParamVars vars;
  for (const auto& [name, t] : params) vars[name] = g.param(name, t);
  Var loss = loss_fn(g, vars);
  const Tensor& lv = g.value(loss);
  check(lv.numel() == 1, "value_and_grad: loss is not scalar, shape " +
                             shape_str(lv.shape));
  g.backward(loss);
  ValueAndGrad out;
  out.value = g.scalar_value(loss);
  for (const auto& [name, t] : params) {
    (void)t;
    out.grads[name] = g.grad_of(name);
  }
  return out;
}

inline double evaluate_loss(const LossFn& loss_fn, const ParamMap& params) {
  Graph g;
  ParamVars vars;
  for (const auto& [name, t] : params) vars[name] = g.param(name, t);
  Var loss = loss_fn(g, vars);
  return g.scalar_value(loss);
}

// Central finite differences over every parameter entry; returns the
// maximum relative error |analytic - numeric| / max(1e-8, |analytic| +
// |numeric|). The numeric side never touches the reverse-mode path.
inline double finite_diff_check(const LossFn& loss_fn, const ParamMap& params,
                                double eps) {
  check(eps > 0.0, "finite_diff_check: eps must be positive");
  ValueAndGrad analytic = value_and_grad(loss_fn, params);
  double max_rel = 0.0;
  ParamMap work = params;
  for (auto& [name, tensor] : work) {
    const Tensor& grad = analytic.grads.at(name);
    for (std::size_t i = 0; i < tensor.numel(); ++i) {
      double saved = tensor.data[i];
      tensor.data[i] = saved + eps;
      double up = evaluate_loss(loss_fn, work);
      tensor.data[i] = saved - eps;
      double down = evaluate_loss(loss_fn, work);
      tensor.data[i] = saved;
      double numeric = (up - down) / (2.0 * eps);
      double a = grad.data[i];
      double rel = std::abs(a - numeric) /
                   std::max(1e-8, std::abs(a) + std::abs(numeric));
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace pegcn
