// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <numeric>

#include "owlfed/errors.hpp"
#include "owlfed/rng.hpp"
#include "owlfed/synth.hpp"

using namespace owlfed;

namespace {

GeneratorSpec small_spec() {
  auto spec = field_generator_spec(2, 0.25);
  spec.blocks.resize(3);
  return spec;
}

}  // namespace

TEST(Synth, SameSeedSameWells) {
  const auto a = synth_blocks(small_spec(), 11);
  const auto b = synth_blocks(small_spec(), 11);
  const auto c = synth_blocks(small_spec(), 12);
  ASSERT_EQ(a.size(), 6u);
  bool differs = false;
  for (std::size_t w = 0; w < a.size(); ++w) {
    ASSERT_EQ(a[w].records.size(), b[w].records.size());
    for (std::size_t i = 0; i < a[w].records.size(); ++i) {
      EXPECT_EQ(a[w].records[i].features, b[w].records[i].features);
      EXPECT_EQ(a[w].records[i].label, b[w].records[i].label);
      differs = differs || a[w].records[i].features != c[w].records[i].features;
    }
  }
  EXPECT_TRUE(differs);
}

TEST(Synth, FullScaleWellsHoldTheFieldCounts) {
  auto spec = field_generator_spec(1, 1.0);
  const auto wells = synth_blocks(spec, 3);
  ASSERT_EQ(wells.size(), 5u);
  EXPECT_EQ(wells[0].block_id, "B1");
  EXPECT_EQ(class_histogram(wells[0]), (std::vector<std::size_t>{5, 203, 736, 66, 31}));
  // B2 has no dry layers at all.
  EXPECT_EQ(class_histogram(wells[1])[3], 0u);
  for (const auto& w : wells) EXPECT_NO_THROW(w.validate(kDefaultClassCount));
}

TEST(Synth, ScaledWellsKeepTheLongTailWithinTwentyPercent) {
  const auto wells = synth_blocks(field_generator_spec(1, 0.5), 5);
  const auto h = class_histogram(wells[0]);
  // head / tail ratios of the field data survive down-scaling
  const double ratio = static_cast<double>(h[2]) / static_cast<double>(h[4]);
  EXPECT_NEAR(ratio, 736.0 / 31.0, 0.2 * 736.0 / 31.0);
  EXPECT_GE(h[0], 1u);
}

TEST(Synth, DepthFeatureIsTheDepth) {
  const auto wells = synth_blocks(small_spec(), 1);
  for (const auto& r : wells[0].records) EXPECT_DOUBLE_EQ(r.features.back(), r.depth);
  EXPECT_EQ(wells[0].feature_names, default_feature_names());
}

TEST(Apportion, LargestRemainder) {
  EXPECT_EQ(apportion({1, 1, 1}, 10), (std::vector<std::size_t>{4, 3, 3}));
  EXPECT_EQ(apportion({5, 203, 736, 66, 31}, 1041), (std::vector<std::size_t>{5, 203, 736, 66, 31}));
  EXPECT_EQ(apportion({0, 2}, 7), (std::vector<std::size_t>{0, 7}));
  EXPECT_THROW(apportion({0, 0}, 3), ArgumentError);
  EXPECT_THROW(apportion({1, -1}, 3), ArgumentError);
}

TEST(Apportion, AlwaysSumsToTotal) {
  Rng rng(8);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> w(1 + uniform_index(rng, 6));
    for (double& v : w) v = uniform01(rng);
    const std::size_t total = uniform_index(rng, 500);
    const auto c = apportion(w, total);
    EXPECT_EQ(std::accumulate(c.begin(), c.end(), std::size_t{0}), total);
  }
}

TEST(Synth, GeneratorSpecJsonRoundTrip) {
  const auto spec = small_spec();
  const nlohmann::json j = spec;
  const auto back = j.get<GeneratorSpec>();
  EXPECT_EQ(nlohmann::json(back), j);
}

TEST(Synth, LabelNoiseKeepsLogsAndFlipsWholeLayers) {
  const auto clean_spec = small_spec();
  auto noisy_spec = clean_spec;
  for (auto& b : noisy_spec.blocks) b.label_noise = 0.5;
  const auto clean = synth_blocks(clean_spec, 3);
  const auto noisy = synth_blocks(noisy_spec, 3);
  ASSERT_EQ(clean.size(), noisy.size());
  std::size_t flipped = 0, total = 0;
  for (std::size_t w = 0; w < clean.size(); ++w) {
    const auto& a = clean[w].records;
    const auto& b = noisy[w].records;
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_EQ(a[i].features, b[i].features);
      EXPECT_EQ(a[i].depth, b[i].depth);
      ++total;
      if (a[i].label != b[i].label) ++flipped;
      // Within one true layer the recorded label stays uniform.
      if (i > 0 && a[i].label == a[i - 1].label) EXPECT_EQ(b[i].label, b[i - 1].label);
    }
  }
  EXPECT_GT(flipped, total / 5);
  EXPECT_LT(flipped, total * 4 / 5);
}

TEST(Synth, LabelNoiseOutOfRangeIsRejected) {
  auto spec = small_spec();
  spec.blocks[0].label_noise = 1.5;
  EXPECT_THROW(synth_blocks(spec, 1), ArgumentError);
  spec.blocks[0].label_noise = 0.3;
  const auto j = nlohmann::json(spec.blocks[0]);
  EXPECT_DOUBLE_EQ(j.get<BlockSpec>().label_noise, 0.3);
  auto stripped = j;
  stripped.erase("label_noise");
  EXPECT_EQ(stripped.get<BlockSpec>().label_noise, 0.0);
}
