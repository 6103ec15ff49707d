#pragma once

#include <string>
#include <vector>

#include "pegcn/common.hpp"
#include "pegcn/tensor.hpp"
#include "pegcn/topology.hpp"

namespace pegcn {

enum class PartitionStrategy { Uni, Spatial };

inline PartitionStrategy partition_strategy_from(const std::string& s) {
  if (s == "uni") return PartitionStrategy::Uni;
  if (s == "spatial") return PartitionStrategy::Spatial;
  throw std::invalid_argument("unknown partition strategy: " + s);
}

// The K_v normalized adjacency matrices of a topology. Partition supports
// are disjoint and together cover exactly the self-loops plus the bones;
// every nonzero row of each matrix sums to 1.
struct GraphPartitions {
  std::size_t joint_count = 0;
  std::vector<Tensor> mats;  // each [V,V]

  std::size_t partition_count() const { return mats.size(); }
};

namespace detail {

inline void row_normalize(Tensor& m, std::size_t v_count) {
  for (std::size_t v = 0; v < v_count; ++v) {
    double sum = 0.0;
    for (std::size_t u = 0; u < v_count; ++u) sum += m.data[v * v_count + u];
    if (sum == 0.0) continue;  // zero rows stay zero
    for (std::size_t u = 0; u < v_count; ++u) m.data[v * v_count + u] /= sum;
  }
}

}  // namespace detail

// Builds the partitioned adjacency matrices.
//   uni:     [identity, neighbors]
//   spatial: [self, centripetal, centrifugal] by hop distance to the
//            center joint; a neighbor at equal distance counts as
//            centripetal.
inline GraphPartitions build_graph(const Topology& topo, PartitionStrategy strategy) {
  validate_topology(topo);
  check(is_connected(topo), "build_graph: topology " + topo.name +
                                " is disconnected");
  std::size_t v_count = topo.joint_count;
  auto adj = adjacency_lists(topo);

  GraphPartitions parts;
  parts.joint_count = v_count;

  Tensor self = Tensor::zeros({v_count, v_count});
  for (std::size_t v = 0; v < v_count; ++v) self.data[v * v_count + v] = 1.0;

  if (strategy == PartitionStrategy::Uni) {
    Tensor nb = Tensor::zeros({v_count, v_count});
    for (std::size_t v = 0; v < v_count; ++v)
      for (std::size_t u : adj[v]) nb.data[v * v_count + u] = 1.0;
    detail::row_normalize(nb, v_count);
    parts.mats = {std::move(self), std::move(nb)};
    return parts;
  }

  auto dist = hop_distances(topo, topo.center);
  Tensor toward = Tensor::zeros({v_count, v_count});
  Tensor away = Tensor::zeros({v_count, v_count});
  for (std::size_t v = 0; v < v_count; ++v) {
    for (std::size_t u : adj[v]) {
      if (dist[u] <= dist[v])
        toward.data[v * v_count + u] = 1.0;
      else
        away.data[v * v_count + u] = 1.0;
    }
  }
  detail::row_normalize(toward, v_count);
  detail::row_normalize(away, v_count);
  parts.mats = {std::move(self), std::move(toward), std::move(away)};
  return parts;
}

}  // namespace pegcn
