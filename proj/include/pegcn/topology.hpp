#pragma once

#include <algorithm>
#include <cstddef>
#include <queue>
#include <string>
#include <utility>
#include <vector>

#include "pegcn/common.hpp"

namespace pegcn {

// Skeleton graph: joints are vertices, bones are undirected edges. The
// center joint anchors spatial partitioning. spatial_channels and
// has_confidence describe the coordinate channels clips on this topology
// carry (e.g. x,y,z or x,y plus a detector confidence).
struct Topology {
  std::string name;
  std::size_t joint_count = 0;
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  std::size_t center = 0;
  std::size_t spatial_channels = 3;
  bool has_confidence = false;

  std::size_t channel_count() const {
    return spatial_channels + (has_confidence ? 1 : 0);
  }
};

inline void validate_topology(const Topology& t) {
  check(t.joint_count >= 1, "topology " + t.name + ": no joints");
  check(t.center < t.joint_count, "topology " + t.name + ": center out of range");
  for (auto [i, j] : t.edges) {
    check(i < t.joint_count && j < t.joint_count,
          "topology " + t.name + ": edge references invalid joint");
    check(i != j, "topology " + t.name + ": self-loop in edge list");
  }
}

inline std::vector<std::vector<std::size_t>> adjacency_lists(const Topology& t) {
  std::vector<std::vector<std::size_t>> adj(t.joint_count);
  for (auto [i, j] : t.edges) {
    adj[i].push_back(j);
    adj[j].push_back(i);
  }
  for (auto& list : adj) std::sort(list.begin(), list.end());
  return adj;
}

// BFS hop distances from `source`; unreachable joints get joint_count.
inline std::vector<std::size_t> hop_distances(const Topology& t, std::size_t source) {
  auto adj = adjacency_lists(t);
  std::vector<std::size_t> dist(t.joint_count, t.joint_count);
  std::queue<std::size_t> queue;
  dist[source] = 0;
  queue.push(source);
  while (!queue.empty()) {
    std::size_t v = queue.front();
    queue.pop();
    for (std::size_t u : adj[v]) {
      if (dist[u] == t.joint_count) {
        dist[u] = dist[v] + 1;
        queue.push(u);
      }
    }
  }
  return dist;
}

inline bool is_connected(const Topology& t) {
  auto dist = hop_distances(t, 0);
  return std::none_of(dist.begin(), dist.end(),
                      [&](std::size_t d) { return d == t.joint_count; });
}

// 25-joint Kinect-v2 skeleton, 3-D coordinates. Bones follow the standard
// joint numbering; center is the middle-of-spine joint.
inline Topology ntu25_topology() {
  Topology t;
  t.name = "ntu25";
  t.joint_count = 25;
  t.center = 1;
  t.spatial_channels = 3;
  t.has_confidence = false;
  const std::size_t bones[][2] = {
      {0, 1},   {1, 20},  {2, 20},  {3, 2},   {4, 20},  {5, 4},
      {6, 5},   {7, 6},   {8, 20},  {9, 8},   {10, 9},  {11, 10},
      {12, 0},  {13, 12}, {14, 13}, {15, 14}, {16, 0},  {17, 16},
      {18, 17}, {19, 18}, {21, 22}, {22, 7},  {23, 24}, {24, 11}};
  for (auto& b : bones) t.edges.emplace_back(b[0], b[1]);
  return t;
}

// 18-joint OpenPose layout, 2-D coordinates plus a confidence channel;
// center is the neck.
inline Topology openpose18_topology() {
  Topology t;
  t.name = "openpose18";
  t.joint_count = 18;
  t.center = 1;
  t.spatial_channels = 2;
  t.has_confidence = true;
  const std::size_t bones[][2] = {
      {4, 3},   {3, 2},  {7, 6},   {6, 5},   {13, 12}, {12, 11},
      {10, 9},  {9, 8},  {11, 5},  {8, 2},   {5, 1},   {2, 1},
      {0, 1},   {15, 0}, {14, 0},  {17, 15}, {16, 14}};
  for (auto& b : bones) t.edges.emplace_back(b[0], b[1]);
  return t;
}

// 9-joint chain used throughout the tests.
inline Topology chain9_topology() {
  Topology t;
  t.name = "chain9";
  t.joint_count = 9;
  t.center = 4;
  t.spatial_channels = 3;
  t.has_confidence = false;
  for (std::size_t i = 0; i + 1 < 9; ++i) t.edges.emplace_back(i, i + 1);
  return t;
}

inline const Topology* find_builtin_topology(const std::string& name) {
  static const Topology builtins[] = {ntu25_topology(), openpose18_topology(),
                                      chain9_topology()};
  for (const Topology& t : builtins)
    if (t.name == name) return &t;
  return nullptr;
}

inline Topology builtin_topology(const std::string& name) {
  const Topology* t = find_builtin_topology(name);
  check(t != nullptr, "unknown topology: " + name);
  return *t;
}

}  // namespace pegcn
