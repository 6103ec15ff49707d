#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pegcn/autodiff.hpp"
#include "pegcn/clip.hpp"
#include "pegcn/common.hpp"
#include "pegcn/graph_partitions.hpp"
#include "pegcn/rng.hpp"
#include "pegcn/tensor.hpp"
#include "pegcn/topology.hpp"

namespace pegcn {

struct BlockSpec {
  std::size_t channels = 16;
  std::size_t stride = 1;
};

struct ModelConfig {
  std::string topology = "chain9";
  std::string partition_strategy = "spatial";
  std::vector<BlockSpec> blocks = {{16, 1}, {16, 1}, {32, 2}, {64, 2}};
  std::size_t embed_dim = 4;
  std::size_t gru_hidden = 64;
  std::size_t classes = 4;
  std::size_t temporal_kernel = 9;
  bool with_global_attention = true;
  bool with_data_graph = true;

  std::size_t in_channels() const {
    return builtin_topology(topology).channel_count();
  }
  std::size_t feature_dim() const { return blocks.back().channels; }
};

inline void apply_preset(ModelConfig& cfg, const std::string& preset) {
  if (preset == "desk") {
    cfg.blocks = {{16, 1}, {16, 1}, {32, 2}, {64, 2}};
    cfg.embed_dim = 4;
    cfg.gru_hidden = 64;
  } else if (preset == "full") {
    cfg.blocks = {{64, 1}, {64, 1}, {64, 1}, {64, 1}, {128, 2}, {128, 1},
                  {128, 1}, {256, 2}, {256, 1}, {256, 1}};
    cfg.embed_dim = 16;
    cfg.gru_hidden = 256;
  } else {
    check(preset == "custom", "unknown model preset: " + preset);
  }
}

// All trainable tensors plus batch-norm running statistics. Parameter
// names are stable; the checkpoint format and the optimizer key on them.
struct PeGCNModel {
  ModelConfig cfg;
  GraphPartitions partitions;
  ParamMap params;
  std::map<std::string, Tensor> state;

  static PeGCNModel create(const ModelConfig& cfg, std::uint64_t seed);
};

namespace detail {

struct ParamBuilder {
  ParamMap* params;
  std::map<std::string, Tensor>* state;
  SplitMix64 rng;

  void uniform(const std::string& name, std::vector<std::size_t> shape,
               double bound) {
    (*params)[name] = Tensor::uniform(std::move(shape), -bound, bound, rng);
  }
  void zeros(const std::string& name, std::vector<std::size_t> shape) {
    (*params)[name] = Tensor::zeros(std::move(shape));
  }
  void bn(const std::string& prefix, std::size_t c) {
    (*params)[prefix + ".gamma"] = Tensor::full({c}, 1.0);
    (*params)[prefix + ".beta"] = Tensor::zeros({c});
    (*state)[prefix + ".mean"] = Tensor::zeros({c});
    (*state)[prefix + ".var"] = Tensor::full({c}, 1.0);
  }
};

}  // namespace detail

inline PeGCNModel PeGCNModel::create(const ModelConfig& cfg, std::uint64_t seed) {
  check(!cfg.blocks.empty(), "model: no blocks configured");
  check(cfg.temporal_kernel % 2 == 1, "model: temporal kernel must be odd");
  check(cfg.classes >= 2, "model: need at least 2 classes");
  PeGCNModel m;
  m.cfg = cfg;
  Topology topo = builtin_topology(cfg.topology);
  m.partitions = build_graph(topo, partition_strategy_from(cfg.partition_strategy));

  std::size_t v_n = topo.joint_count;
  std::size_t k_v = m.partitions.partition_count();
  detail::ParamBuilder b{&m.params, &m.state, SplitMix64(derive_seed(seed, "init"))};

  std::size_t c_in = cfg.in_channels();
  b.bn("data_bn", c_in);
  std::size_t prev = c_in;
  for (std::size_t i = 0; i < cfg.blocks.size(); ++i) {
    const BlockSpec& blk = cfg.blocks[i];
    std::string p = "block" + std::to_string(i);
    double w_bound = 1.0 / std::sqrt(static_cast<double>(prev));
    for (std::size_t k = 0; k < k_v; ++k) {
      std::string sk = std::to_string(k);
      b.uniform(p + ".gconv.w" + sk, {blk.channels, prev}, w_bound);
      b.zeros(p + ".gconv.b" + sk, {v_n, v_n});
      b.uniform(p + ".gconv.theta" + sk, {prev, cfg.embed_dim}, 0.1);
      b.uniform(p + ".gconv.phi" + sk, {prev, cfg.embed_dim}, 0.1);
    }
    b.bn(p + ".bn1", blk.channels);
    b.uniform(p + ".tcn.w", {blk.channels, blk.channels * cfg.temporal_kernel},
              1.0 / std::sqrt(static_cast<double>(blk.channels * cfg.temporal_kernel)));
    b.bn(p + ".bn2", blk.channels);
    if (blk.channels != prev || blk.stride != 1) {
      b.uniform(p + ".res.w", {blk.channels, prev}, w_bound);
      b.bn(p + ".res_bn", blk.channels);
    }
    prev = blk.channels;
  }
  std::size_t d = cfg.feature_dim(), h = cfg.gru_hidden;
  double dw = 1.0 / std::sqrt(static_cast<double>(d));
  double hw = 1.0 / std::sqrt(static_cast<double>(h));
  for (const char* gate : {"z", "r", "h"}) {
    b.uniform(std::string("gru.w") + gate, {d, h}, dw);
    b.uniform(std::string("gru.u") + gate, {h, h}, hw);
    b.zeros(std::string("gru.b") + gate, {h});
  }
  b.uniform("fc.w", {h, cfg.classes}, hw);
  b.zeros("fc.b", {cfg.classes});
  b.uniform("pe.w", {d, h}, dw);
  return m;
}

// ---- batching --------------------------------------------------------------

// Stacks clips into [N,C,T,V,M]; all clips must share one shape.
inline Tensor batch_clips(const std::vector<SkeletonClip>& clips,
                          const std::vector<std::size_t>& indices) {
  check(!indices.empty(), "batch_clips: empty batch");
  const Tensor& first = clips[indices[0]].coords;
  std::size_t per = first.numel();
  std::vector<std::size_t> shape = {indices.size()};
  shape.insert(shape.end(), first.shape.begin(), first.shape.end());
  Tensor out = Tensor::zeros(shape);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const SkeletonClip& clip = clips[indices[i]];
    check(clip.coords.shape == first.shape,
          "batch_clips: clip " + clip.clip_id + " shape " +
              shape_str(clip.coords.shape) + " differs from " +
              shape_str(first.shape));
    std::copy(clip.coords.data.begin(), clip.coords.data.end(),
              out.data.begin() + i * per);
  }
  return out;
}

// Presence of each (clip, person) pair in a [N,C,T,V,M] batch, flattened to
// [N*M]; absent persons (all-zero coordinates) get 0.
inline Tensor person_mask(const Tensor& batch) {
  check(batch.rank() == 5, "person_mask: expected [N,C,T,V,M], got " +
                               shape_str(batch.shape));
  std::size_t n = batch.shape[0], c_n = batch.shape[1], t_n = batch.shape[2],
              v_n = batch.shape[3], m_n = batch.shape[4];
  Tensor mask = Tensor::zeros({n * m_n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t m = 0; m < m_n; ++m) {
      bool present = false;
      for (std::size_t c = 0; c < c_n && !present; ++c)
        for (std::size_t t = 0; t < t_n && !present; ++t)
          for (std::size_t v = 0; v < v_n && !present; ++v)
            present = batch.data[(((i * c_n + c) * t_n + t) * v_n + v) * m_n + m] != 0.0;
      mask.data[i * m_n + m] = present ? 1.0 : 0.0;
    }
  return mask;
}

// ---- forward ---------------------------------------------------------------

struct ForwardOptions {
  bool training = true;       // batch statistics vs running statistics in BN
  bool update_running = false;
};

// One forward invocation: tape, model (running stats are mutated when
// update_running is set) and the bound parameter variables.
struct ModelForward {
  Graph& g;
  PeGCNModel& model;
  const ParamVars& p;
  ForwardOptions opt;

  Var var(const std::string& name) const {
    auto it = p.find(name);
    check(it != p.end(), "forward: parameter " + name + " is not bound");
    return it->second;
  }

  BnSpec bn_spec(const std::string& prefix, const Tensor* mask) {
    BnSpec spec;
    spec.training = opt.training;
    spec.update_running = opt.training && opt.update_running;
    spec.running_mean = &model.state.at(prefix + ".mean");
    spec.running_var = &model.state.at(prefix + ".var");
    spec.batch_mask = mask;
    return spec;
  }
};

struct GConvVars {
  std::vector<Var> w, b, theta, phi;  // one entry per partition
};

// Per-sample data-dependent graph: softmax over the joint axis of the
// embedded similarity between joints, computed from the time-averaged
// input. `pooled` is [N,V,C_in]; the result is row-stochastic [N,V,V].
inline Var data_dependent_graph(Graph& g, Var pooled, Var theta, Var phi) {
  Var th = g.matmul(pooled, theta);                    // [N,V,Ce]
  Var ph = g.matmul(pooled, phi);                      // [N,V,Ce]
  Var scores = g.matmul(th, g.permute(ph, {0, 2, 1})); // [N,V,V]
  return g.softmax(scores, 2);
}

// Adaptive graph convolution: out = sum_k W_k x (A_k + B_k + C_k) with A_k
// the fixed normalized partitions, B_k a trainable global attention matrix
// and C_k the data-dependent graph. x is [N,C_in,T,V].
inline Var adaptive_gconv_forward(Graph& g, const GraphPartitions& parts,
                                  const GConvVars& vars, Var f_in,
                                  bool with_global_attention,
                                  bool with_data_graph) {
  const Tensor& x = g.value(f_in);
  check(x.rank() == 4, "adaptive_gconv: input must be [N,C,T,V], got " +
                           shape_str(x.shape));
  std::size_t n = x.shape[0], c_in = x.shape[1], t_n = x.shape[2], v_n = x.shape[3];
  check(v_n == parts.joint_count,
        "adaptive_gconv: joint axis " + std::to_string(v_n) +
            " does not match partitions (" + std::to_string(parts.joint_count) + ")");
  std::size_t k_v = parts.partition_count();
  check(vars.w.size() == k_v && vars.b.size() == k_v &&
            vars.theta.size() == k_v && vars.phi.size() == k_v,
        "adaptive_gconv: partition count mismatch in parameters");

  Var x3 = g.reshape(f_in, {n, c_in * t_n, v_n});
  Var pooled;  // [N,V,C_in], time-averaged input for the data graph
  if (with_data_graph) {
    Var mean_t = g.reduce_mean(f_in, {2});
    pooled = g.permute(mean_t, {0, 2, 1});
  }

  Var acc;
  bool have_acc = false;
  for (std::size_t k = 0; k < k_v; ++k) {
    Var mix = g.constant(parts.mats[k]);
    if (with_global_attention) mix = g.add(mix, vars.b[k]);
    if (with_data_graph)
      mix = g.add(data_dependent_graph(g, pooled, vars.theta[k], vars.phi[k]), mix);
    Var propagated = g.matmul(x3, mix);                            // [N,C*T,V]
    Var per_channel = g.reshape(propagated, {n, c_in, t_n * v_n});
    Var mapped = g.matmul(vars.w[k], per_channel);                 // [N,C_out,T*V]
    acc = have_acc ? g.add(acc, mapped) : mapped;
    have_acc = true;
  }
  std::size_t c_out = g.value(vars.w[0]).shape[0];
  return g.reshape(acc, {n, c_out, t_n, v_n});
}

namespace detail {

inline GConvVars gconv_vars(const ModelForward& mf, std::size_t block) {
  GConvVars v;
  std::string p = "block" + std::to_string(block) + ".gconv.";
  for (std::size_t k = 0; k < mf.model.partitions.partition_count(); ++k) {
    std::string sk = std::to_string(k);
    v.w.push_back(mf.var(p + "w" + sk));
    v.b.push_back(mf.var(p + "b" + sk));
    v.theta.push_back(mf.var(p + "theta" + sk));
    v.phi.push_back(mf.var(p + "phi" + sk));
  }
  return v;
}

// graph conv -> BN -> relu -> temporal conv -> BN, plus residual, then relu
inline Var gcn_block(ModelForward& mf, std::size_t i, Var x, const Tensor& mask) {
  Graph& g = mf.g;
  const BlockSpec& blk = mf.model.cfg.blocks[i];
  std::string p = "block" + std::to_string(i);
  const Tensor& in_shape = g.value(x);
  std::size_t n = in_shape.shape[0], c_in = in_shape.shape[1],
              t_in = in_shape.shape[2], v_n = in_shape.shape[3];
  std::size_t kernel = mf.model.cfg.temporal_kernel;
  std::size_t pad = (kernel - 1) / 2;

  Var gout = adaptive_gconv_forward(g, mf.model.partitions, gconv_vars(mf, i), x,
                                    mf.model.cfg.with_global_attention,
                                    mf.model.cfg.with_data_graph);
  Var bn1 = g.batch_norm(gout, mf.var(p + ".bn1.gamma"), mf.var(p + ".bn1.beta"),
                         mf.bn_spec(p + ".bn1", &mask));
  Var act = g.relu(bn1);

  Var unfolded = g.unfold_time(act, kernel, blk.stride, pad);
  std::size_t t_out = g.value(unfolded).shape[2];
  Var flat = g.reshape(unfolded, {n, blk.channels * kernel, t_out * v_n});
  Var tconv = g.matmul(mf.var(p + ".tcn.w"), flat);
  Var main = g.batch_norm(g.reshape(tconv, {n, blk.channels, t_out, v_n}),
                          mf.var(p + ".bn2.gamma"), mf.var(p + ".bn2.beta"),
                          mf.bn_spec(p + ".bn2", &mask));

  Var res = x;
  if (blk.channels != c_in || blk.stride != 1) {
    Var sub = g.unfold_time(x, 1, blk.stride, 0);  // [N,C_in,T_out,V]
    Var sub3 = g.reshape(sub, {n, c_in, t_out * v_n});
    Var proj = g.matmul(mf.var(p + ".res.w"), sub3);
    res = g.batch_norm(g.reshape(proj, {n, blk.channels, t_out, v_n}),
                       mf.var(p + ".res_bn.gamma"), mf.var(p + ".res_bn.beta"),
                       mf.bn_spec(p + ".res_bn", &mask));
  }
  (void)t_in;
  return g.relu(g.add(main, res));
}

}  // namespace detail

// Backbone: persons fold into the batch axis, data BN, the block stack,
// then average pooling over joints and present persons. Output [N,D,T'].
inline Var gcn_forward(ModelForward& mf, Var batch) {
  Graph& g = mf.g;
  const Tensor& x = g.value(batch);
  check(x.rank() == 5, "gcn_forward: expected [N,C,T,V,M], got " +
                           shape_str(x.shape));
  std::size_t n = x.shape[0], c_n = x.shape[1], t_n = x.shape[2],
              v_n = x.shape[3], m_n = x.shape[4];
  check(c_n == mf.model.cfg.in_channels(),
        "gcn_forward: channel count " + std::to_string(c_n) +
            " does not match topology " + mf.model.cfg.topology);
  check(v_n == mf.model.partitions.joint_count,
        "gcn_forward: joint count " + std::to_string(v_n) +
            " does not match topology " + mf.model.cfg.topology);

  Tensor mask = person_mask(x);
  Var folded = g.reshape(g.permute(batch, {0, 4, 1, 2, 3}), {n * m_n, c_n, t_n, v_n});
  Var h = g.batch_norm(folded, mf.var("data_bn.gamma"), mf.var("data_bn.beta"),
                       mf.bn_spec("data_bn", &mask));
  for (std::size_t i = 0; i < mf.model.cfg.blocks.size(); ++i)
    h = detail::gcn_block(mf, i, h, mask);

  std::size_t d = mf.model.cfg.feature_dim();
  std::size_t t_out = g.value(h).shape[2];
  Var joints_pooled = g.reduce_mean(h, {3});                   // [N*M,D,T']
  Var per_person = g.reshape(joints_pooled, {n, m_n, d, t_out});

  // mean over present persons only
  Tensor mask_full = Tensor::zeros({n, m_n, d, t_out});
  Tensor inv_count = Tensor::zeros({n, d, t_out});
  for (std::size_t i = 0; i < n; ++i) {
    double count = 0.0;
    for (std::size_t m = 0; m < m_n; ++m) count += mask.data[i * m_n + m];
    check(count > 0.0, "gcn_forward: batch item " + std::to_string(i) +
                           " has no present person");
    for (std::size_t m = 0; m < m_n; ++m) {
      double w = mask.data[i * m_n + m];
      for (std::size_t j = 0; j < d * t_out; ++j)
        mask_full.data[(i * m_n + m) * d * t_out + j] = w;
    }
    for (std::size_t j = 0; j < d * t_out; ++j)
      inv_count.data[i * d * t_out + j] = 1.0 / count;
  }
  Var weighted = g.mul(per_person, g.constant(std::move(mask_full)));
  Var summed = g.reduce_sum(weighted, {1});                    // [N,D,T']
  return g.mul(summed, g.constant(std::move(inv_count)));
}

// Arithmetic mean over the time axis: [N,D,T'] -> [N,D].
inline Var pool_latent(Graph& g, Var seq) {
  const Tensor& x = g.value(seq);
  check(x.rank() == 3, "pool_latent: expected [N,D,T'], got " + shape_str(x.shape));
  return g.reduce_mean(seq, {2});
}

// GRU over [N,D,T']; returns the final hidden state [N,H].
//   z_t = sigmoid(x_t Wz + h Uz + bz)
//   r_t = sigmoid(x_t Wr + h Ur + br)
//   g_t = tanh(x_t Wh + (r_t . h) Uh + bh)
//   h_t = (1 - z_t) . h + z_t . g_t,  h_0 = 0
inline Var gru_forward(ModelForward& mf, Var seq) {
  Graph& g = mf.g;
  const Tensor& x = g.value(seq);
  check(x.rank() == 3, "gru_forward: expected [N,D,T'], got " + shape_str(x.shape));
  std::size_t n = x.shape[0], d = x.shape[1], t_n = x.shape[2];
  check(d == g.value(mf.var("gru.wz")).shape[0],
        "gru_forward: input width does not match cell");
  std::size_t h_n = mf.model.cfg.gru_hidden;
  Var h = g.constant(Tensor::zeros({n, h_n}));
  for (std::size_t t = 0; t < t_n; ++t) {
    Var x_t = g.reshape(g.gather(seq, 2, {t}), {n, d});
    Var z = g.sigmoid(g.add(g.add(g.matmul(x_t, mf.var("gru.wz")),
                                  g.matmul(h, mf.var("gru.uz"))),
                            mf.var("gru.bz")));
    Var r = g.sigmoid(g.add(g.add(g.matmul(x_t, mf.var("gru.wr")),
                                  g.matmul(h, mf.var("gru.ur"))),
                            mf.var("gru.br")));
    Var cand = g.tanh_(g.add(g.add(g.matmul(x_t, mf.var("gru.wh")),
                                   g.matmul(g.mul(r, h), mf.var("gru.uh"))),
                             mf.var("gru.bh")));
    h = g.add(g.mul(g.affine(z, -1.0, 1.0), h), g.mul(z, cand));
  }
  return h;
}

// Affine classifier head; no softmax (that lives in the loss and in the
// evaluation protocol).
inline Var classify(ModelForward& mf, Var context) {
  Graph& g = mf.g;
  const Tensor& x = g.value(context);
  check(x.rank() == 2 && x.shape[1] == mf.model.cfg.gru_hidden,
        "classify: expected [N,H], got " + shape_str(x.shape));
  return g.add(g.matmul(context, mf.var("fc.w")), mf.var("fc.b"));
}

struct TrainForwardOut {
  Var pooled_clean;  // [N,D]
  Var context;       // [N,H]
  Var logits;        // [N,classes]
};

// Two-branch training pipeline with shared backbone weights: the clean
// branch yields the pooled latent, the noisy branch feeds the
// autoregressor and the classifier.
inline TrainForwardOut forward_train(ModelForward& mf, Var clean, Var noisy) {
  const Tensor& a = mf.g.value(clean);
  const Tensor& b = mf.g.value(noisy);
  check(a.shape == b.shape, "forward_train: clean batch " + shape_str(a.shape) +
                                " and noisy batch " + shape_str(b.shape) +
                                " are misaligned");
  TrainForwardOut out;
  Var latent_clean = gcn_forward(mf, clean);
  out.pooled_clean = pool_latent(mf.g, latent_clean);
  Var latent_noisy = gcn_forward(mf, noisy);
  out.context = gru_forward(mf, latent_noisy);
  out.logits = classify(mf, out.context);
  return out;
}

// Single-branch inference pipeline.
inline Var forward_infer(ModelForward& mf, Var batch) {
  Var latent = gcn_forward(mf, batch);
  Var context = gru_forward(mf, latent);
  return classify(mf, context);
}

// Binds every model parameter into the graph as a constant (no gradients);
// used for evaluation.
inline ParamVars bind_constants(Graph& g, const PeGCNModel& model) {
  ParamVars vars;
  for (const auto& [name, tensor] : model.params) vars[name] = g.constant(tensor);
  return vars;
}

}  // namespace pegcn
