#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "pegcn/checkpoint.hpp"

using namespace pegcn;

namespace {

ModelConfig cfg_a() {
  ModelConfig cfg;
  cfg.topology = "chain9";
  cfg.partition_strategy = "spatial";
  cfg.blocks = {{5, 1}, {7, 2}};
  cfg.embed_dim = 2;
  cfg.gru_hidden = 6;
  cfg.classes = 3;
  return cfg;
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST(Checkpoint, RoundTripPreservesSinglePrecisionValues) {
  PeGCNModel model = PeGCNModel::create(cfg_a(), 77);
  // make running stats distinctive
  model.state.at("block0.bn1.mean").data[0] = 0.125;
  auto path = temp_file("pegcn_ckpt.pegc");
  save_checkpoint(model, path.string());
  PeGCNModel loaded = load_checkpoint(path.string());
  EXPECT_EQ(loaded.cfg.blocks.size(), model.cfg.blocks.size());
  EXPECT_EQ(loaded.cfg.topology, model.cfg.topology);
  ASSERT_EQ(loaded.params.size(), model.params.size());
  for (const auto& [name, t] : model.params) {
    const Tensor& l = loaded.params.at(name);
    ASSERT_EQ(l.shape, t.shape) << name;
    for (std::size_t i = 0; i < t.numel(); ++i)
      EXPECT_EQ(l.data[i], static_cast<double>(static_cast<float>(t.data[i])))
          << name << "[" << i << "]";
  }
  EXPECT_EQ(loaded.state.at("block0.bn1.mean").data[0],
            static_cast<double>(static_cast<float>(0.125)));
  std::filesystem::remove(path);
}

TEST(Checkpoint, FileStartsWithMagicBytes) {
  PeGCNModel model = PeGCNModel::create(cfg_a(), 78);
  auto path = temp_file("pegcn_ckpt_magic.pegc");
  save_checkpoint(model, path.string());
  std::ifstream in(path.string(), std::ios::binary);
  char magic[4];
  in.read(magic, 4);
  EXPECT_EQ(std::string(magic, 4), "PEGC");
  std::filesystem::remove(path);
}

TEST(Checkpoint, RejectsForeignFile) {
  auto path = temp_file("pegcn_not_a_ckpt.bin");
  std::ofstream(path.string(), std::ios::binary) << "definitely not a checkpoint";
  EXPECT_THROW(load_checkpoint(path.string()), std::invalid_argument);
  std::filesystem::remove(path);
}

TEST(Checkpoint, RejectsTruncatedBlob) {
  PeGCNModel model = PeGCNModel::create(cfg_a(), 79);
  auto path = temp_file("pegcn_ckpt_trunc.pegc");
  save_checkpoint(model, path.string());
  auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size - 64);
  EXPECT_THROW(load_checkpoint(path.string()), std::invalid_argument);
  std::filesystem::remove(path);
}

TEST(Checkpoint, SaveIsByteDeterministic) {
  PeGCNModel model = PeGCNModel::create(cfg_a(), 80);
  auto p1 = temp_file("pegcn_ckpt_a.pegc");
  auto p2 = temp_file("pegcn_ckpt_b.pegc");
  save_checkpoint(model, p1.string());
  save_checkpoint(model, p2.string());
  std::ifstream a(p1.string(), std::ios::binary), b(p2.string(), std::ios::binary);
  std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
  std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
  EXPECT_EQ(sa, sb);
  std::filesystem::remove(p1);
  std::filesystem::remove(p2);
}
