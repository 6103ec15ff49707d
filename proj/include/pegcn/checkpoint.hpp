#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pegcn/common.hpp"
#include "pegcn/config.hpp"
#include "pegcn/model.hpp"

namespace pegcn {

// Checkpoint file layout:
//   bytes 0..3   magic "PEGC"
//   u32 LE       format version (1)
//   u64 LE       header length in bytes
//   header       JSON: config record plus the tensor manifest ("params"
//                and "state" lists of {name, shape, offset}); offsets are
//                byte positions inside the blob region, in manifest order
//   blob region  raw little-endian IEEE-754 float32 values
//
// Loading validates every manifest shape against the shapes implied by the
// config record.

inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline nlohmann::json manifest_for(const std::map<std::string, Tensor>& tensors,
                                   std::uint64_t& offset) {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& [name, t] : tensors) {
    list.push_back({{"name", name}, {"shape", t.shape}, {"offset", offset}});
    offset += t.numel() * sizeof(float);
  }
  return list;
}

inline void write_blob(std::ofstream& out, const Tensor& t) {
  for (double v : t.data) {
    float f = static_cast<float>(v);
    out.write(reinterpret_cast<const char*>(&f), sizeof(float));
  }
}

inline void read_into(const std::vector<char>& blob, std::uint64_t offset,
                      Tensor& t, const std::string& name) {
  std::uint64_t bytes = t.numel() * sizeof(float);
  check(offset + bytes <= blob.size(),
        "checkpoint: blob region too small for tensor " + name);
  for (std::size_t i = 0; i < t.numel(); ++i) {
    float f;
    std::memcpy(&f, blob.data() + offset + i * sizeof(float), sizeof(float));
    t.data[i] = static_cast<double>(f);
  }
}

}  // namespace detail

inline void save_checkpoint(const PeGCNModel& model, const std::string& path) {
  nlohmann::json header;
  header["config"] = model_config_to_json(model.cfg);
  std::uint64_t offset = 0;
  header["params"] = detail::manifest_for(model.params, offset);
  header["state"] = detail::manifest_for(model.state, offset);
  std::string header_bytes = header.dump();

  std::ofstream out(path, std::ios::binary);
  check_runtime(out.good(), "save_checkpoint: cannot open " + path);
  out.write("PEGC", 4);
  std::uint32_t version = kCheckpointVersion;
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));
  std::uint64_t header_len = header_bytes.size();
  out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
  out.write(header_bytes.data(), static_cast<std::streamsize>(header_bytes.size()));
  for (const auto& [name, t] : model.params) {
    (void)name;
    detail::write_blob(out, t);
  }
  for (const auto& [name, t] : model.state) {
    (void)name;
    detail::write_blob(out, t);
  }
  check_runtime(out.good(), "save_checkpoint: write failed for " + path);
}

inline PeGCNModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check_runtime(in.good(), "load_checkpoint: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  check(in.good() && std::memcmp(magic, "PEGC", 4) == 0,
        "load_checkpoint: " + path + " is not a PEGC checkpoint");
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  check(version == kCheckpointVersion,
        "load_checkpoint: unsupported format version " + std::to_string(version));
  std::uint64_t header_len = 0;
  in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
  check(in.good(), "load_checkpoint: truncated header length");
  std::string header_bytes(header_len, '\0');
  in.read(header_bytes.data(), static_cast<std::streamsize>(header_len));
  check(in.good(), "load_checkpoint: truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_bytes);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("load_checkpoint: invalid header (") +
                                e.what() + ")");
  }
  std::vector<char> blob{std::istreambuf_iterator<char>(in),
                         std::istreambuf_iterator<char>()};

  ModelConfig cfg = model_config_from_json(header.at("config"));
  PeGCNModel model = PeGCNModel::create(cfg, /*seed=*/0);

  auto load_section = [&](const char* section, std::map<std::string, Tensor>& dst) {
    std::map<std::string, nlohmann::json> entries;
    for (const auto& e : header.at(section))
      entries[e.at("name").get<std::string>()] = e;
    check(entries.size() == dst.size(),
          std::string("load_checkpoint: ") + section + " manifest has " +
              std::to_string(entries.size()) + " tensors, config implies " +
              std::to_string(dst.size()));
    for (auto& [name, t] : dst) {
      auto it = entries.find(name);
      check(it != entries.end(),
            "load_checkpoint: missing tensor " + name + " in " + section);
      auto shape = it->second.at("shape").get<std::vector<std::size_t>>();
      check(shape == t.shape, "load_checkpoint: tensor " + name + " has shape " +
                                  shape_str(shape) + ", config implies " +
                                  shape_str(t.shape));
      detail::read_into(blob, it->second.at("offset").get<std::uint64_t>(), t, name);
    }
  };
  load_section("params", model.params);
  load_section("state", model.state);
  return model;
}

}  // namespace pegcn
