#include <gtest/gtest.h>

#include <map>

#include "pegcn/synth.hpp"

using namespace pegcn;

TEST(Synth, SeedDeterminismIsBitwise) {
  SyntheticSpec spec;
  spec.seed = 7;
  auto a = synth_generate(spec);
  auto b = synth_generate(spec);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].clip_id, b[i].clip_id);
    EXPECT_EQ(a[i].coords.data, b[i].coords.data);
  }
}

TEST(Synth, LabelsExactlyBalanced) {
  SyntheticSpec spec;
  spec.classes = 4;
  spec.per_class = 8;
  auto clips = synth_generate(spec);
  ASSERT_EQ(clips.size(), 32u);
  std::map<int, int> counts;
  for (const auto& c : clips) counts[c.label]++;
  ASSERT_EQ(counts.size(), 4u);
  for (auto [label, n] : counts) {
    (void)label;
    EXPECT_EQ(n, 8);
  }
}

TEST(Synth, StillClassWithZeroJitterIsStatic) {
  SyntheticSpec spec;
  spec.classes = 4;  // class 3 is "still"
  spec.per_class = 1;
  spec.frames = 6;
  spec.jitter_sigma = 0.0;
  auto clips = synth_generate(spec);
  const SkeletonClip& still = clips[3];
  ASSERT_EQ(still.label, 3);
  std::size_t t_n = still.frames(), v_n = still.joints();
  for (std::size_t c = 0; c < still.channels(); ++c)
    for (std::size_t t = 1; t < t_n; ++t)
      for (std::size_t v = 0; v < v_n; ++v)
        EXPECT_EQ(still.coords.at({c, t, v, 0}), still.coords.at({c, 0, v, 0}));
}

TEST(Synth, TooManyClassesWithoutCustomRangesThrows) {
  SyntheticSpec spec;
  spec.classes = 5;
  EXPECT_THROW(synth_generate(spec), std::invalid_argument);
  // custom ranges lift the limit
  spec.class_specs = {{"wave", {}},   {"bounce", {}}, {"twist", {}},
                      {"still", {}},  {"wave", {0.1, 0.2, 4.0, 5.0}}};
  auto clips = synth_generate(spec);
  EXPECT_EQ(clips.size(), 5 * spec.per_class);
}

TEST(Synth, InvalidSpecsThrow) {
  SyntheticSpec one_class;
  one_class.classes = 1;
  EXPECT_THROW(synth_generate(one_class), std::invalid_argument);
  SyntheticSpec bad_family;
  bad_family.class_specs = {{"sprint", {}}, {"wave", {}}};
  bad_family.classes = 2;
  EXPECT_THROW(synth_generate(bad_family), std::invalid_argument);
}

TEST(Synth, OpenposeTopologyCarriesConfidenceChannel) {
  SyntheticSpec spec;
  spec.classes = 2;
  spec.per_class = 1;
  spec.frames = 3;
  spec.topology = "openpose18";
  auto clips = synth_generate(spec);
  const SkeletonClip& c = clips[0];
  ASSERT_EQ(c.channels(), 3u);  // x, y, confidence
  for (std::size_t t = 0; t < c.frames(); ++t)
    for (std::size_t v = 0; v < c.joints(); ++v)
      EXPECT_EQ(c.coords.at({2, t, v, 0}), 1.0);
}
