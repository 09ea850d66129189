#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <map>
#include <set>

#include "warpnas/errors.hpp"
#include "warpnas/metrics.hpp"
#include "warpnas/synthdata.hpp"

using namespace warpnas;

namespace {

const Resolution kDesk{96, 128};

double mean_tv(Category c, std::size_t n) {
  const auto d = generate(c, n, kDesk, 3);
  const auto b = d.batch_range(0, d.size());
  return tv_loss(FlowField(b.gt_flow), TvReduction::kSum).item<double>();
}

}  // namespace

TEST(Synthdata, Deterministic) {
  const auto a = generate(Category::kSlingVest, 1, kDesk, 7);
  const auto b = generate(Category::kSlingVest, 1, kDesk, 7);
  const auto& sa = a.scene(0);
  const auto& sb = b.scene(0);
  EXPECT_TRUE(torch::equal(sa.garment, sb.garment));
  EXPECT_TRUE(torch::equal(sa.garment_mask, sb.garment_mask));
  EXPECT_TRUE(torch::equal(sa.flow, sb.flow));
  EXPECT_TRUE(torch::equal(sa.parsing, sb.parsing));
  const auto c = generate(Category::kSlingVest, 1, kDesk, 8);
  EXPECT_FALSE(torch::equal(sa.flow, c.scene(0).flow));
}

TEST(Synthdata, ConstructionIdentity) {
  for (auto cat : kAllCategories) {
    const auto d = generate(cat, 4, kDesk, 21);
    const auto b = d.batch_range(0, d.size());
    const auto warped = grid_warp(b.garment, FlowField(b.gt_flow));
    EXPECT_NEAR(ssim(warped, b.warped_garment), 1.0, 1e-6) << category_name(cat);
    const auto mask = (grid_warp(b.garment_mask, FlowField(b.gt_flow)) >= 0.5).to(torch::kFloat32);
    if (cat != Category::kLongSleeve) {
      EXPECT_TRUE(torch::equal(mask, b.target_mask)) << category_name(cat);
    } else {
      // The occluder only ever removes target pixels.
      EXPECT_EQ((b.target_mask * (1 - mask)).sum().item<double>(), 0.0);
    }
  }
}

TEST(Synthdata, BatchFieldsInRange) {
  const auto d = generate(Category::kPants, 3, kDesk, 5);
  const auto b = d.batch_range(0, 3);
  for (const auto* t : {&b.garment, &b.garment_mask, &b.target_mask, &b.warped_garment, &b.person,
                        &b.preserved, &b.pose, &b.parsing, &b.body_shape, &b.head}) {
    EXPECT_GE(t->min().item<double>(), -1e-6);
    EXPECT_LE(t->max().item<double>(), 1.0 + 1e-6);  // bilinear sampling may round up by one ulp
    EXPECT_EQ(t->size(0), 3);
    EXPECT_EQ(t->size(2), 96);
    EXPECT_EQ(t->size(3), 128);
  }
  EXPECT_EQ(b.pose.size(1), kPoseKeypoints);
  EXPECT_EQ(b.parsing.size(1), kParsingClasses);
  EXPECT_TRUE(torch::allclose(b.parsing.sum(1), torch::ones({3, 96, 128})));
  EXPECT_LT(b.partial_labels.max().item<int64_t>(), kPartialClasses);
}

TEST(Synthdata, WarpIsOrientationPreserving) {
  for (auto cat : kAllCategories) {
    const auto d = generate(cat, 8, kDesk, 13);
    const auto f = d.batch_range(0, d.size()).gt_flow.to(torch::kFloat64);
    using torch::indexing::None;
    using torch::indexing::Slice;
    const auto dx = f.index({Slice(), Slice(), Slice(0, -1), Slice(1, None)}) -
                    f.index({Slice(), Slice(), Slice(0, -1), Slice(0, -1)});
    const auto dy = f.index({Slice(), Slice(), Slice(1, None), Slice(0, -1)}) -
                    f.index({Slice(), Slice(), Slice(0, -1), Slice(0, -1)});
    const auto det = (1 + dx.select(1, 0)) * (1 + dy.select(1, 1)) - dx.select(1, 1) * dy.select(1, 0);
    EXPECT_GT(det.min().item<double>(), 0.0) << category_name(cat);
  }
}

TEST(Synthdata, ComplexityOrdering) {
  std::map<Category, double> tv;
  for (auto c : kAllCategories) tv[c] = mean_tv(c, 200);
  const double margin = 1.05;
  EXPECT_GT(tv[Category::kShortSleeve], margin * tv[Category::kSlingVest]);
  EXPECT_GT(tv[Category::kPants], margin * tv[Category::kShortSleeve]);
  EXPECT_GT(tv[Category::kSkirt], margin * tv[Category::kShortSleeve]);
  EXPECT_LT(std::abs(tv[Category::kPants] - tv[Category::kSkirt]), 0.1 * tv[Category::kPants]);
  EXPECT_GT(tv[Category::kLongSleeve], margin * std::max(tv[Category::kPants], tv[Category::kSkirt]));
}

TEST(Synthdata, InvalidResolution) {
  EXPECT_THROW(generate(Category::kSkirt, 1, Resolution{100, 128}, 1), ConfigError);
  EXPECT_THROW(generate(Category::kSkirt, 1, Resolution{0, 128}, 1), ConfigError);
  EXPECT_THROW(Resolution::parse("96-128"), ConfigError);
  EXPECT_EQ(Resolution::parse("64x48"), (Resolution{64, 48}));
}

TEST(Split, DisjointStratifiedReproducible) {
  Dataset all;
  for (auto c : kAllCategories) all.append(generate(c, 14, Resolution{64, 48}, 2));
  const auto s = split(all, SplitFractions{}, 9);
  std::set<std::string> seen;
  for (const auto* part : {&s.train, &s.val, &s.test}) {
    for (const auto& id : part->ids()) EXPECT_TRUE(seen.insert(id).second) << id;
  }
  EXPECT_EQ(seen.size(), all.size());
  for (auto n : s.train.count_by_category()) EXPECT_NEAR(double(n), 10.0, 1.0);
  for (auto n : s.val.count_by_category()) EXPECT_NEAR(double(n), 2.0, 1.0);
  for (auto n : s.test.count_by_category()) EXPECT_NEAR(double(n), 2.0, 1.0);
  EXPECT_EQ(split(all, SplitFractions{}, 9).val.ids(), s.val.ids());
  EXPECT_THROW(split(all, SplitFractions{0.5, 0.4, 0.4}, 9), ConfigError);
  EXPECT_THROW(split(all, SplitFractions{1.2, -0.1, -0.1}, 9), ConfigError);
}

TEST(Split, SaveLoadRoundTrip) {
  const auto root = std::filesystem::temp_directory_path() / "warpnas_synth_roundtrip";
  std::filesystem::remove_all(root);
  const auto splits = generate_splits(DatasetLayout{2, 1, 1}, Resolution{64, 48}, 4);
  save_splits(root, splits, 4);
  const auto val = load_split(root, "val");
  ASSERT_EQ(val.size(), splits.val.size());
  EXPECT_EQ(manifest_ids(root, "val"), splits.val.ids());
  for (std::size_t i = 0; i < val.size(); ++i) {
    const auto& a = splits.val.scene(i);
    const auto& b = val.scene(i);
    EXPECT_EQ(a.record.id, b.record.id);
    EXPECT_TRUE(torch::equal(a.garment, b.garment));
    EXPECT_TRUE(torch::equal(a.parsing, b.parsing));
    EXPECT_TRUE(torch::allclose(a.flow, b.flow));
  }
  std::filesystem::remove_all(root);
}
