#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "warpnas/errors.hpp"
#include "warpnas/flow.hpp"

using namespace warpnas;

namespace {

/// Smooth image in [0,1]: a sum of low-frequency sinusoids.
Tensor smooth_image(int64_t c, int64_t h, int64_t w, double phase) {
  auto ys = torch::linspace(0, 1, h, torch::kFloat64).view({h, 1});
  auto xs = torch::linspace(0, 1, w, torch::kFloat64).view({1, w});
  std::vector<Tensor> chans;
  for (int64_t k = 0; k < c; ++k) {
    chans.push_back(0.5 + 0.25 * torch::sin(6.0 * xs + 3.0 * ys + phase + k) +
                    0.2 * torch::cos(4.0 * ys - 2.0 * xs + 0.5 * k));
  }
  return torch::stack(chans).unsqueeze(0);
}

/// Smooth flow with displacements of at most `amp` pixels.
FlowField smooth_flow(int64_t h, int64_t w, double amp, double phase) {
  auto ys = torch::linspace(0, 1, h, torch::kFloat64).view({h, 1});
  auto xs = torch::linspace(0, 1, w, torch::kFloat64).view({1, w});
  auto dx = amp * torch::sin(3.0 * ys + 2.0 * xs + phase);
  auto dy = amp * torch::cos(2.0 * xs - 2.5 * ys + phase);
  return FlowField(torch::stack({dx.expand({h, w}), dy.expand({h, w})}).unsqueeze(0));
}

double mean_abs(const Tensor& a, const Tensor& b) { return (a - b).abs().mean().item<double>(); }

}  // namespace

TEST(FlowField, RejectsWrongChannelCount) {
  EXPECT_THROW(FlowField(torch::zeros({1, 3, 4, 4})), ShapeError);
  EXPECT_THROW(FlowField(torch::zeros({2, 4, 4})), ShapeError);
  EXPECT_NO_THROW(FlowField(torch::zeros({1, 2, 4, 4})));
}

TEST(ComposeFlows, ZeroIsIdentityOnBothSides) {
  const auto f = smooth_flow(12, 16, 2.0, 0.3);
  const auto z = FlowField::zeros(1, 12, 16, torch::kFloat64);
  EXPECT_TRUE(torch::allclose(compose_flows(z, f).values(), f.values(), 1e-12, 1e-12));
  EXPECT_TRUE(torch::allclose(compose_flows(f, z).values(), f.values(), 1e-12, 1e-12));
}

TEST(ComposeFlows, MatchesSequentialWarping) {
  const auto img = smooth_image(3, 48, 64, 0.1);
  const auto f1 = smooth_flow(48, 64, 2.5, 0.2);
  const auto f2 = smooth_flow(48, 64, 2.0, 1.3);
  const auto direct = grid_warp(img, compose_flows(f1, f2));
  const auto sequential = grid_warp(grid_warp(img, f1), f2);
  EXPECT_LT(mean_abs(direct, sequential), 2e-2);
}

TEST(ComposeFlows, AssociativeOnSmoothFlows) {
  const auto a = smooth_flow(32, 40, 1.5, 0.0);
  const auto b = smooth_flow(32, 40, 1.5, 0.9);
  const auto c = smooth_flow(32, 40, 1.5, 2.1);
  const auto left = compose_flows(compose_flows(a, b), c);
  const auto right = compose_flows(a, compose_flows(b, c));
  EXPECT_LT(mean_abs(left.values(), right.values()), 5e-2);
}

TEST(ComposeFlows, ResolutionMismatchIsShapeError) {
  EXPECT_THROW(compose_flows(FlowField::zeros(1, 4, 4), FlowField::zeros(1, 4, 6)), ShapeError);
}

TEST(UpsampleFlow, ConstantFlowDoublesInValueAndSize) {
  auto v = torch::zeros({1, 2, 12, 16});
  v.select(1, 0).fill_(1.0);
  const auto up = upsample_flow(FlowField(v));
  EXPECT_EQ(up.height(), 24);
  EXPECT_EQ(up.width(), 32);
  auto expected = torch::zeros({1, 2, 24, 32});
  expected.select(1, 0).fill_(2.0);
  EXPECT_TRUE(torch::allclose(up.values(), expected));
}

TEST(UpsampleFlow, ZeroStaysZero) {
  const auto up = upsample_flow(FlowField::zeros(2, 6, 8));
  EXPECT_EQ(up.values().sizes(), (std::vector<int64_t>{2, 2, 12, 16}));
  EXPECT_EQ(up.values().abs().max().item<float>(), 0.0f);
}

TEST(UpsampleFlow, OnlyFactorTwo) { EXPECT_THROW(upsample_flow(FlowField::zeros(1, 4, 4), 3), ArgumentError); }

TEST(UpsampleFlow, CommutesWithWarpingOnSmoothImages) {
  const auto full = smooth_image(3, 48, 64, 0.4);
  const auto half = bilinear_resize(full, 24, 32);
  const auto f = smooth_flow(24, 32, 1.5, 0.7);
  const auto coarse_then_up = bilinear_resize(grid_warp(half, f), 48, 64);
  const auto up_then_warp = grid_warp(full, upsample_flow(f));
  EXPECT_LT(mean_abs(coarse_then_up, up_then_warp), 5e-2);
}

TEST(TvLoss, ConstantFlowIsZero) {
  auto v = torch::ones({1, 2, 5, 6}) * 3.5;
  EXPECT_EQ(tv_loss(FlowField(v)).item<double>(), 0.0);
  EXPECT_EQ(tv_loss(FlowField(v), TvReduction::kMean).item<double>(), 0.0);
}

TEST(TvLoss, TwoByTwoHandCase) {
  // x-channel rows [0,1],[0,1]: two horizontal differences of 1, vertical
  // differences 0; y-channel zero.
  auto v = torch::zeros({1, 2, 2, 2}, torch::kFloat64);
  v[0][0] = torch::tensor({{0.0, 1.0}, {0.0, 1.0}}, torch::kFloat64);
  EXPECT_DOUBLE_EQ(tv_loss(FlowField(v)).item<double>(), 2.0);
  EXPECT_DOUBLE_EQ(tv_loss(FlowField(v), TvReduction::kMean).item<double>(), 2.0 / 8.0);
}

TEST(TvLoss, AbsolutelyHomogeneousAndBatchAveraged) {
  const auto f = smooth_flow(10, 12, 2.0, 0.5);
  const double base = tv_loss(f).item<double>();
  EXPECT_NEAR(tv_loss(FlowField(-3.0 * f.values())).item<double>(), 3.0 * base, 1e-9);
  const auto batch = FlowField(torch::cat({f.values(), torch::zeros_like(f.values())}));
  EXPECT_NEAR(tv_loss(batch).item<double>(), base / 2.0, 1e-9);
}

TEST(TvLoss, NonNegativeOnRandomFlows) {
  for (int i = 0; i < 20; ++i) {
    EXPECT_GE(tv_loss(FlowField(torch::randn({2, 2, 7, 9}))).item<float>(), 0.0f);
  }
}

TEST(FlowIo, RoundTrip) {
  const auto f = FlowField(torch::randn({1, 2, 6, 9}));
  const auto path = std::filesystem::temp_directory_path() / "warpnas_flow_roundtrip.wflo";
  write_flow(path, f);
  EXPECT_EQ(std::filesystem::file_size(path), 4u + 8u + 2u * 6u * 9u * 4u);
  const auto back = read_flow(path);
  EXPECT_TRUE(torch::equal(back.values(), f.values()));
  std::filesystem::remove(path);
}

TEST(FlowIo, RejectsBadMagic) {
  const auto path = std::filesystem::temp_directory_path() / "warpnas_flow_bad.wflo";
  {
    std::ofstream out(path, std::ios::binary);
    out << "NOPE12345678";
  }
  EXPECT_THROW(read_flow(path), ParseError);
  std::filesystem::remove(path);
}
