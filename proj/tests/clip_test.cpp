#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "pegcn/clip.hpp"
#include "pegcn/io.hpp"
#include "pegcn/rng.hpp"
#include "pegcn/synth.hpp"

using namespace pegcn;

namespace {

SkeletonClip two_point_clip() {
  SkeletonClip clip;
  clip.clip_id = "fixture-two-point";
  clip.topology_id = "custom2";
  clip.label = 0;
  clip.coords = Tensor::zeros({3, 1, 2, 1});
  // joint 0 at (0,0,0), joint 1 at (1,2,3)
  clip.coords.at({0, 0, 1, 0}) = 1.0;
  clip.coords.at({1, 0, 1, 0}) = 2.0;
  clip.coords.at({2, 0, 1, 0}) = 3.0;
  return clip;
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST(ClipBbox, TwoPointBox) {
  BoundingBox box = clip_bbox(two_point_clip());
  EXPECT_EQ(box.min, (std::vector<double>{0, 0, 0}));
  EXPECT_EQ(box.max, (std::vector<double>{1, 2, 3}));
}

TEST(ClipBbox, DegenerateAllJointsIdentical) {
  SkeletonClip clip;
  clip.clip_id = "fixture-degenerate";
  clip.topology_id = "custom3";
  clip.coords = Tensor::full({3, 2, 3, 1}, 0.5);
  BoundingBox box = clip_bbox(clip);
  EXPECT_EQ(box.min, box.max);
  EXPECT_EQ(box.min, (std::vector<double>{0.5, 0.5, 0.5}));
}

TEST(ClipBbox, MatchesBruteForceScan) {
  SplitMix64 rng(404);
  SkeletonClip clip;
  clip.clip_id = "fixture-random";
  clip.topology_id = "custom4";
  clip.coords = Tensor::uniform({3, 3, 4, 2}, -2.0, 2.0, rng);
  BoundingBox box = clip_bbox(clip);
  std::size_t t_n = 3, v_n = 4, m_n = 2;
  for (std::size_t c = 0; c < 3; ++c) {
    double lo = clip.coords.at({c, 0, 0, 0}), hi = lo;
    for (std::size_t t = 0; t < t_n; ++t)
      for (std::size_t v = 0; v < v_n; ++v)
        for (std::size_t m = 0; m < m_n; ++m) {
          double x = clip.coords.at({c, t, v, m});
          lo = std::min(lo, x);
          hi = std::max(hi, x);
        }
    EXPECT_DOUBLE_EQ(box.min[c], lo);
    EXPECT_DOUBLE_EQ(box.max[c], hi);
  }
}

TEST(ClipBbox, ExcludesAbsentPerson) {
  SkeletonClip clip;
  clip.clip_id = "fixture-absent";
  clip.topology_id = "custom2";
  clip.coords = Tensor::zeros({3, 1, 2, 2});
  // person 0 spans (1..2); person 1 is all-zero (absent)
  clip.coords.at({0, 0, 0, 0}) = 1.0;
  clip.coords.at({0, 0, 1, 0}) = 2.0;
  clip.coords.at({1, 0, 0, 0}) = 1.0;
  clip.coords.at({1, 0, 1, 0}) = 1.0;
  clip.coords.at({2, 0, 0, 0}) = 1.0;
  clip.coords.at({2, 0, 1, 0}) = 1.0;
  BoundingBox box = clip_bbox(clip);
  EXPECT_DOUBLE_EQ(box.min[0], 1.0);  // the absent person's zeros are excluded
  EXPECT_DOUBLE_EQ(box.max[0], 2.0);
}

TEST(ClipBbox, NoValidJointsThrows) {
  SkeletonClip clip;
  clip.clip_id = "fixture-empty";
  clip.topology_id = "custom2";
  clip.coords = Tensor::zeros({3, 1, 2, 1});
  EXPECT_THROW(clip_bbox(clip), std::invalid_argument);
}

TEST(ClipIo, RoundTripIsIdentity) {
  SyntheticSpec spec;
  spec.classes = 3;
  spec.per_class = 2;
  spec.frames = 5;
  spec.seed = 99;
  auto clips = synth_generate(spec);
  auto path = temp_file("pegcn_roundtrip.jsonl");
  save_clips(clips, path.string());
  auto loaded = load_clips(path.string());
  ASSERT_EQ(loaded.size(), clips.size());
  for (std::size_t i = 0; i < clips.size(); ++i) {
    EXPECT_EQ(loaded[i].clip_id, clips[i].clip_id);
    EXPECT_EQ(loaded[i].topology_id, clips[i].topology_id);
    EXPECT_EQ(loaded[i].label, clips[i].label);
    EXPECT_EQ(loaded[i].coords.shape, clips[i].coords.shape);
    EXPECT_EQ(loaded[i].coords.data, clips[i].coords.data);  // bit-exact
  }
  std::filesystem::remove(path);
}

TEST(ClipIo, EmptyFileGivesEmptyList) {
  auto path = temp_file("pegcn_empty.jsonl");
  std::ofstream(path.string()).close();
  EXPECT_TRUE(load_clips(path.string()).empty());
  std::filesystem::remove(path);
}

TEST(ClipIo, WrongJointCountNamesClip) {
  auto path = temp_file("pegcn_badjoints.jsonl");
  {
    std::ofstream out(path.string());
    out << R"({"format_version":1,"clip_id":"bad-clip","topology":"chain9",)"
        << R"("label":0,"shape":[3,1,5,1],"coords":[)";
    for (int i = 0; i < 15; ++i) out << (i ? "," : "") << "1.0";
    out << "]}\n";
  }
  try {
    load_clips(path.string());
    FAIL() << "expected joint count error";
  } catch (const std::invalid_argument& e) {
    std::string msg = e.what();
    EXPECT_NE(msg.find("bad-clip"), std::string::npos);
    EXPECT_NE(msg.find("line 1"), std::string::npos);
  }
  std::filesystem::remove(path);
}

TEST(ClipIo, MissingFieldNamesFieldAndLine) {
  auto path = temp_file("pegcn_missingfield.jsonl");
  {
    std::ofstream out(path.string());
    out << R"({"format_version":1,"clip_id":"a","topology":"t","label":0,"shape":[1,1,1,1]})"
        << "\n";
  }
  try {
    load_clips(path.string());
    FAIL() << "expected missing field error";
  } catch (const std::invalid_argument& e) {
    std::string msg = e.what();
    EXPECT_NE(msg.find("coords"), std::string::npos);
    EXPECT_NE(msg.find("line 1"), std::string::npos);
  }
  std::filesystem::remove(path);
}

TEST(TopologyIo, RoundTripAndPinnedDataFiles) {
  auto path = temp_file("pegcn_topo.json");
  save_topology(chain9_topology(), path.string());
  Topology loaded = load_topology(path.string());
  Topology expected = chain9_topology();
  EXPECT_EQ(loaded.name, expected.name);
  EXPECT_EQ(loaded.joint_count, expected.joint_count);
  EXPECT_EQ(loaded.edges, expected.edges);
  EXPECT_EQ(loaded.center, expected.center);
  EXPECT_EQ(loaded.spatial_channels, expected.spatial_channels);
  std::filesystem::remove(path);
}
