#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pegcn/clip.hpp"
#include "pegcn/common.hpp"
#include "pegcn/topology.hpp"

namespace pegcn {

// Clip interchange format: one JSON object per line (JSONL) with fields
// format_version, clip_id, topology, label, shape [C,T,V,M] and coords as
// a flat row-major array (C slowest, M fastest). Doubles are emitted with
// shortest round-trip formatting, so save followed by load is bit-exact.

inline constexpr int kClipFormatVersion = 1;
inline constexpr int kTopologyFormatVersion = 1;

inline void save_clips(const std::vector<SkeletonClip>& clips,
                       const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  check_runtime(out.good(), "save_clips: cannot open " + path);
  for (const SkeletonClip& clip : clips) {
    nlohmann::json j;
    j["format_version"] = kClipFormatVersion;
    j["clip_id"] = clip.clip_id;
    j["topology"] = clip.topology_id;
    j["label"] = clip.label;
    j["shape"] = clip.coords.shape;
    j["coords"] = clip.coords.data;
    out << j.dump() << '\n';
  }
  check_runtime(out.good(), "save_clips: write failed for " + path);
}

namespace detail {

template <typename T>
T require_field(const nlohmann::json& j, const char* name, std::size_t line) {
  if (!j.contains(name))
    throw std::invalid_argument("load_clips: line " + std::to_string(line) +
                                ": missing field '" + name + "'");
  try {
    return j.at(name).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw std::invalid_argument("load_clips: line " + std::to_string(line) +
                                ": field '" + name + "' has wrong type");
  }
}

}  // namespace detail

inline std::vector<SkeletonClip> load_clips(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check_runtime(in.good(), "load_clips: cannot open " + path);
  std::vector<SkeletonClip> clips;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw std::invalid_argument("load_clips: line " + std::to_string(line_no) +
                                  ": invalid JSON (" + e.what() + ")");
    }
    int version = detail::require_field<int>(j, "format_version", line_no);
    check(version == kClipFormatVersion,
          "load_clips: line " + std::to_string(line_no) +
              ": unsupported format_version " + std::to_string(version));
    SkeletonClip clip;
    clip.clip_id = detail::require_field<std::string>(j, "clip_id", line_no);
    clip.topology_id = detail::require_field<std::string>(j, "topology", line_no);
    clip.label = detail::require_field<int>(j, "label", line_no);
    auto shape = detail::require_field<std::vector<std::size_t>>(j, "shape", line_no);
    auto coords = detail::require_field<std::vector<double>>(j, "coords", line_no);
    if (shape.size() != 4)
      throw std::invalid_argument("load_clips: line " + std::to_string(line_no) +
                                  ": field 'shape' must have 4 entries");
    try {
      clip.coords = Tensor(shape, std::move(coords));
      validate_clip(clip);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("load_clips: line " + std::to_string(line_no) +
                                  ": " + e.what());
    }
    clips.push_back(std::move(clip));
  }
  return clips;
}

// Topology file: a single JSON object with name, joint_count, edges and
// center. Channel semantics (2-D vs 3-D, confidence channel) come from the
// builtin registry when the name matches a builtin; unknown topologies are
// treated as 3-D without confidence.
inline void save_topology(const Topology& topo, const std::string& path) {
  nlohmann::json j;
  j["format_version"] = kTopologyFormatVersion;
  j["name"] = topo.name;
  j["joint_count"] = topo.joint_count;
  nlohmann::json edges = nlohmann::json::array();
  for (auto [a, b] : topo.edges) edges.push_back({a, b});
  j["edges"] = edges;
  j["center"] = topo.center;
  std::ofstream out(path, std::ios::binary);
  check_runtime(out.good(), "save_topology: cannot open " + path);
  out << j.dump(2) << '\n';
}

inline Topology load_topology(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check_runtime(in.good(), "load_topology: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("load_topology: " + path + ": invalid JSON (" +
                                e.what() + ")");
  }
  check(j.value("format_version", 0) == kTopologyFormatVersion,
        "load_topology: " + path + ": unsupported format_version");
  Topology topo;
  topo.name = j.at("name").get<std::string>();
  topo.joint_count = j.at("joint_count").get<std::size_t>();
  for (const auto& e : j.at("edges"))
    topo.edges.emplace_back(e.at(0).get<std::size_t>(), e.at(1).get<std::size_t>());
  topo.center = j.at("center").get<std::size_t>();
  if (const Topology* builtin = find_builtin_topology(topo.name)) {
    topo.spatial_channels = builtin->spatial_channels;
    topo.has_confidence = builtin->has_confidence;
  }
  validate_topology(topo);
  return topo;
}

}  // namespace pegcn
