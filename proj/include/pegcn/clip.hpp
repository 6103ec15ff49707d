#pragma once

#include <string>
#include <vector>

#include "pegcn/common.hpp"
#include "pegcn/tensor.hpp"
#include "pegcn/topology.hpp"

namespace pegcn {

// One skeleton sequence: coords is [C,T,V,M] (channels, frames, joints,
// persons). An absent person is all-zero coordinates by convention and is
// excluded from bounding boxes and batch statistics.
struct SkeletonClip {
  Tensor coords;
  std::string topology_id;
  int label = 0;
  std::string clip_id;

  std::size_t channels() const { return coords.shape[0]; }
  std::size_t frames() const { return coords.shape[1]; }
  std::size_t joints() const { return coords.shape[2]; }
  std::size_t persons() const { return coords.shape[3]; }
};

inline void validate_clip(const SkeletonClip& clip) {
  check(clip.coords.rank() == 4, "clip " + clip.clip_id +
                                     ": coords must be [C,T,V,M], got " +
                                     shape_str(clip.coords.shape));
  check(clip.persons() <= 2, "clip " + clip.clip_id + ": M must be 1 or 2");
  check(clip.label >= 0, "clip " + clip.clip_id + ": negative label");
  check(clip.coords.all_finite(), "clip " + clip.clip_id +
                                      ": non-finite coordinate");
  if (const Topology* topo = find_builtin_topology(clip.topology_id)) {
    check(clip.joints() == topo->joint_count,
          "clip " + clip.clip_id + ": joint count " +
              std::to_string(clip.joints()) + " does not match topology " +
              clip.topology_id + " (" + std::to_string(topo->joint_count) + ")");
  }
}

inline bool person_present(const SkeletonClip& clip, std::size_t m) {
  std::size_t c_n = clip.channels(), t_n = clip.frames(), v_n = clip.joints(),
              m_n = clip.persons();
  for (std::size_t c = 0; c < c_n; ++c)
    for (std::size_t t = 0; t < t_n; ++t)
      for (std::size_t v = 0; v < v_n; ++v)
        if (clip.coords.data[((c * t_n + t) * v_n + v) * m_n + m] != 0.0)
          return true;
  return false;
}

struct BoundingBox {
  std::vector<double> min, max;  // per channel
};

// Per-channel min/max over all frames, joints and present persons.
inline BoundingBox clip_bbox(const SkeletonClip& clip) {
  std::size_t c_n = clip.channels(), t_n = clip.frames(), v_n = clip.joints(),
              m_n = clip.persons();
  std::vector<bool> present(m_n);
  bool any = false;
  for (std::size_t m = 0; m < m_n; ++m) {
    present[m] = person_present(clip, m);
    any = any || present[m];
  }
  check(any, "clip_bbox: clip " + clip.clip_id + " has no valid joints");
  BoundingBox box;
  box.min.assign(c_n, 0.0);
  box.max.assign(c_n, 0.0);
  for (std::size_t c = 0; c < c_n; ++c) {
    bool first = true;
    for (std::size_t t = 0; t < t_n; ++t)
      for (std::size_t v = 0; v < v_n; ++v)
        for (std::size_t m = 0; m < m_n; ++m) {
          if (!present[m]) continue;
          double x = clip.coords.data[((c * t_n + t) * v_n + v) * m_n + m];
          if (first) {
            box.min[c] = box.max[c] = x;
            first = false;
          } else {
            box.min[c] = std::min(box.min[c], x);
            box.max[c] = std::max(box.max[c], x);
          }
        }
  }
  return box;
}

}  // namespace pegcn
