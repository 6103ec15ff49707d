#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "pegcn/clip.hpp"
#include "pegcn/common.hpp"
#include "pegcn/rng.hpp"
#include "pegcn/topology.hpp"

namespace pegcn {

inline constexpr double kTwoPi = 6.283185307179586476925286766559;

// Per-class motion parameter ranges; amplitude is spatial units (radians
// for "twist"), frequency is cycles per clip.
struct MotionRange {
  double amp_lo = 0.3, amp_hi = 0.8;
  double freq_lo = 1.0, freq_hi = 3.0;
};

struct ClassSpec {
  std::string family;  // wave | bounce | twist | still
  MotionRange range;
};

struct SyntheticSpec {
  std::size_t classes = 4;
  std::size_t per_class = 8;
  std::size_t frames = 16;
  std::string topology = "chain9";
  double jitter_sigma = 0.01;
  std::uint64_t seed = 1;
  std::vector<ClassSpec> class_specs;  // empty: class i gets builtin family i
};

namespace detail {

inline std::vector<ClassSpec> default_class_specs(std::size_t classes) {
  const ClassSpec builtin[4] = {
      {"wave", {0.3, 0.8, 1.0, 3.0}},
      {"bounce", {0.2, 0.6, 1.0, 3.0}},
      {"twist", {0.5, 1.2, 1.0, 3.0}},
      {"still", {0.0, 0.0, 0.0, 0.0}},
  };
  check(classes <= 4,
        "synth_generate: " + std::to_string(classes) +
            " classes exceed the 4 built-in motion families; provide "
            "per-class ranges");
  return std::vector<ClassSpec>(builtin, builtin + classes);
}

// Deterministic rest pose: BFS from the center joint, children fan out on
// a fixed direction palette with bone length 0.25.
inline std::vector<std::array<double, 3>> rest_pose(const Topology& topo) {
  static const double dirs[8][3] = {
      {1, 0, 0},          {-1, 0, 0},         {0, 1, 0},   {0, -1, 0},
      {0.7071, 0.7071, 0}, {-0.7071, 0.7071, 0}, {0.7071, -0.7071, 0},
      {-0.7071, -0.7071, 0}};
  auto adj = adjacency_lists(topo);
  std::vector<std::array<double, 3>> pos(topo.joint_count, {0, 0, 0});
  std::vector<bool> placed(topo.joint_count, false);
  std::vector<std::size_t> order;
  placed[topo.center] = true;
  order.push_back(topo.center);
  for (std::size_t head = 0; head < order.size(); ++head) {
    std::size_t v = order[head];
    std::size_t ordinal = 0;
    for (std::size_t u : adj[v]) {
      if (placed[u]) continue;
      const double* d = dirs[ordinal % 8];
      pos[u] = {pos[v][0] + 0.25 * d[0], pos[v][1] + 0.25 * d[1],
                pos[v][2] + 0.25 * d[2]};
      placed[u] = true;
      order.push_back(u);
      ++ordinal;
    }
  }
  return pos;
}

// Path from the center to the farthest joint (ties to the lowest index);
// the center itself is excluded.
inline std::vector<std::size_t> limb_chain(const Topology& topo) {
  auto adj = adjacency_lists(topo);
  auto dist = hop_distances(topo, topo.center);
  std::size_t far = 0;
  for (std::size_t v = 1; v < topo.joint_count; ++v)
    if (dist[v] > dist[far]) far = v;
  std::vector<std::size_t> chain;
  std::size_t cur = far;
  while (cur != topo.center) {
    chain.push_back(cur);
    for (std::size_t u : adj[cur]) {
      if (dist[u] + 1 == dist[cur]) {
        cur = u;
        break;
      }
    }
  }
  std::reverse(chain.begin(), chain.end());
  return chain;
}

}  // namespace detail

// Deterministic labeled dataset: four motion families over a rest pose,
// per-sample parameters drawn from the class range, Gaussian jitter on the
// spatial channels. Labels are exactly balanced.
inline std::vector<SkeletonClip> synth_generate(const SyntheticSpec& spec) {
  check(spec.classes >= 2, "synth_generate: need at least 2 classes");
  check(spec.per_class >= 1, "synth_generate: per_class must be >= 1");
  check(spec.frames >= 1, "synth_generate: frames must be >= 1");
  check(spec.jitter_sigma >= 0.0, "synth_generate: negative jitter sigma");
  Topology topo = builtin_topology(spec.topology);

  std::vector<ClassSpec> specs = spec.class_specs.empty()
                                     ? detail::default_class_specs(spec.classes)
                                     : spec.class_specs;
  check(specs.size() >= spec.classes,
        "synth_generate: class_specs shorter than class count");
  for (const ClassSpec& cs : specs) {
    check(cs.family == "wave" || cs.family == "bounce" || cs.family == "twist" ||
              cs.family == "still",
          "synth_generate: unknown motion family " + cs.family);
    check(cs.range.amp_hi >= cs.range.amp_lo && cs.range.freq_hi >= cs.range.freq_lo,
          "synth_generate: empty parameter range for family " + cs.family);
  }

  auto rest = detail::rest_pose(topo);
  auto chain = detail::limb_chain(topo);
  std::size_t c_n = topo.channel_count();
  std::size_t t_n = spec.frames;
  std::size_t v_n = topo.joint_count;
  std::size_t spatial = topo.spatial_channels;

  std::vector<SkeletonClip> clips;
  clips.reserve(spec.classes * spec.per_class);
  for (std::size_t cls = 0; cls < spec.classes; ++cls) {
    const ClassSpec& cs = specs[cls];
    for (std::size_t idx = 0; idx < spec.per_class; ++idx) {
      SplitMix64 rng(derive_seed(spec.seed, "synth", {cls, idx}));
      double amp = rng.uniform(cs.range.amp_lo, cs.range.amp_hi);
      double freq = rng.uniform(cs.range.freq_lo, cs.range.freq_hi);
      double phase = rng.uniform(0.0, kTwoPi);

      SkeletonClip clip;
      clip.topology_id = topo.name;
      clip.label = static_cast<int>(cls);
      clip.clip_id = "synth-c" + std::to_string(cls) + "-s" + std::to_string(idx);
      clip.coords = Tensor::zeros({c_n, t_n, v_n, 1});

      for (std::size_t t = 0; t < t_n; ++t) {
        double wave_pos = std::sin(kTwoPi * freq * static_cast<double>(t) /
                                       static_cast<double>(t_n) +
                                   phase);
        for (std::size_t v = 0; v < v_n; ++v) {
          double p[3] = {rest[v][0], rest[v][1], rest[v][2]};
          if (cs.family == "wave") {
            for (std::size_t q = 0; q < chain.size(); ++q) {
              if (chain[q] == v) {
                double reach = static_cast<double>(q + 1) /
                               static_cast<double>(chain.size());
                p[0] += amp * reach * wave_pos;
                break;
              }
            }
          } else if (cs.family == "bounce") {
            p[1] += amp * wave_pos;
          } else if (cs.family == "twist") {
            double theta = amp * wave_pos;
            double cx = rest[topo.center][0];
            std::size_t other = spatial >= 3 ? 2 : 1;  // rotate x-z, or x-y in 2-D
            double co = rest[topo.center][other];
            double dx = p[0] - cx, dy = p[other] - co;
            p[0] = cx + dx * std::cos(theta) - dy * std::sin(theta);
            p[other] = co + dx * std::sin(theta) + dy * std::cos(theta);
          }
          for (std::size_t c = 0; c < spatial; ++c) {
            double jitter = spec.jitter_sigma > 0.0
                                ? spec.jitter_sigma * rng.normal()
                                : 0.0;
            clip.coords.data[((c * t_n + t) * v_n + v) * 1] = p[c] + jitter;
          }
          if (topo.has_confidence)
            clip.coords.data[((spatial * t_n + t) * v_n + v) * 1] = 1.0;
        }
      }
      clips.push_back(std::move(clip));
    }
  }
  return clips;
}

}  // namespace pegcn
