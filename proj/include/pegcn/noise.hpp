#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <vector>

#include "pegcn/clip.hpp"
#include "pegcn/common.hpp"
#include "pegcn/rng.hpp"
#include "pegcn/topology.hpp"

namespace pegcn {

// Bounding-box joint corruption. `level` joints are chosen once per clip
// and replaced, in every frame independently, by coordinates drawn
// uniformly per channel from the clip's bounding box.
struct NoiseSpec {
  std::size_t level = 0;
  std::uint64_t seed = 0;
};

// Exact draw order, for reproducibility across implementations:
//   1. one SplitMix64 stream seeded with spec.seed;
//   2. joint selection: Fisher-Yates prefix of the index permutation
//      (level swaps, bounded draws via rejection sampling);
//   3. values: frames outer, selected joints in ascending index order,
//      then present persons, then spatial channels, one uniform each.
// The confidence channel (when the topology has one) is not drawn; it is
// set to 1.0 on corrupted joints. Absent persons stay absent. The same
// joint indices are corrupted in every present person.
inline SkeletonClip inject_noise(const SkeletonClip& clip, const NoiseSpec& spec) {
  validate_clip(clip);
  std::size_t v_n = clip.joints();
  check(spec.level <= v_n, "inject_noise: level " + std::to_string(spec.level) +
                               " exceeds joint count " + std::to_string(v_n));
  std::size_t m_n = clip.persons();
  std::vector<bool> present(m_n);
  bool any = false;
  for (std::size_t m = 0; m < m_n; ++m) {
    present[m] = person_present(clip, m);
    any = any || present[m];
  }
  check(any, "inject_noise: clip " + clip.clip_id + " is empty");

  SkeletonClip out = clip;
  if (spec.level == 0) return out;

  BoundingBox box = clip_bbox(clip);
  std::size_t conf_channel = clip.channels();  // past-the-end: none
  if (const Topology* topo = find_builtin_topology(clip.topology_id)) {
    if (topo->has_confidence && clip.channels() == topo->channel_count())
      conf_channel = topo->spatial_channels;
  }

  SplitMix64 rng(spec.seed);
  std::vector<std::size_t> perm(v_n);
  std::iota(perm.begin(), perm.end(), 0);
  for (std::size_t i = 0; i < spec.level; ++i) {
    std::size_t j = i + static_cast<std::size_t>(rng.below(v_n - i));
    std::swap(perm[i], perm[j]);
  }
  std::vector<std::size_t> selected(perm.begin(), perm.begin() + spec.level);
  std::sort(selected.begin(), selected.end());

  std::size_t c_n = clip.channels(), t_n = clip.frames();
  for (std::size_t t = 0; t < t_n; ++t)
    for (std::size_t v : selected)
      for (std::size_t m = 0; m < m_n; ++m) {
        if (!present[m]) continue;
        for (std::size_t c = 0; c < c_n; ++c) {
          double value = c == conf_channel
                             ? 1.0
                             : rng.uniform(box.min[c], box.max[c]);
          out.coords.data[((c * t_n + t) * v_n + v) * m_n + m] = value;
        }
      }
  return out;
}

// Seed for noising one clip: fold the clip id into a derived stream seed.
inline std::uint64_t noise_seed_for_clip(std::uint64_t base, std::string_view tag,
                                         std::uint64_t index,
                                         std::string_view clip_id) {
  std::uint64_t acc = derive_seed(base, tag, {index});
  return mix64(acc ^ mix64(fnv1a64(clip_id)));
}

}  // namespace pegcn
