#include <gtest/gtest.h>

#include <map>
#include <set>

#include "warpnas/errors.hpp"
#include "warpnas/fusion_supernet.hpp"
#include "warpnas/synthdata.hpp"

using namespace warpnas;

namespace {

FusionSupernetConfig small_config() {
  FusionSupernetConfig cfg;
  cfg.height = 64;
  cfg.width = 48;
  cfg.base_width = 8;
  return cfg;
}

FusionInput random_input(int64_t n, int64_t h, int64_t w, uint64_t seed) {
  torch::manual_seed(seed);
  FusionInput in;
  in.preserved_person = torch::rand({n, 3, h, w});
  in.warped_garment = torch::rand({n, 3, h, w});
  const auto labels = torch::randint(0, kParsingClasses, {n, h, w}, torch::kInt64);
  in.parsing = torch::one_hot(labels, kParsingClasses).permute({0, 3, 1, 2}).to(torch::kFloat32);
  in.pose = torch::rand({n, kPoseChannels, h, w});
  return in;
}

void pin_mask_head(const FusionSupernet& net, float bias) {
  torch::NoGradGuard guard;
  const auto& w = net->mask_head()->weights();
  w.weight.zero_();
  w.bias.fill_(bias);
}

FusionGenome genome_of(std::vector<SkipChoice> skips) {
  FusionGenome g = FusionGenome::unet(static_cast<int>(skips.size()));
  g.skips = std::move(skips);
  return g;
}

}  // namespace

TEST(FusionConfig, LevelWidthsAndDepth) {
  FusionSupernetConfig cfg;
  EXPECT_EQ(cfg.level_width(0), 64);
  EXPECT_EQ(cfg.level_width(1), 128);
  EXPECT_EQ(cfg.level_width(2), 256);
  EXPECT_EQ(cfg.level_width(3), 512);
  EXPECT_EQ(cfg.level_width(4), 512);
  EXPECT_EQ(cfg.resolved_levels(), 4);  // 96 rows
  cfg.height = 256;
  EXPECT_EQ(cfg.resolved_levels(), 5);
  cfg.height = 100;
  EXPECT_THROW(FusionSupernet{cfg}, ConfigError);
}

TEST(Composite, HandValues) {
  const auto coarse = torch::full({1, 3, 2, 2}, -0.5);
  const auto garment = torch::full({1, 3, 2, 2}, 0.75);
  auto mask = torch::tensor({0.0, 0.25, 0.5, 1.0}).view({1, 1, 2, 2});
  const auto out = composite(coarse, mask, garment);
  const auto expected = torch::tensor({-0.5, -0.1875, 0.125, 0.75}).view({1, 1, 2, 2}).expand({1, 3, 2, 2});
  EXPECT_TRUE(torch::allclose(out, expected, 0, 1e-12));
}

TEST(FusionSupernet, CompositingIdentityOnEveryForward) {
  FusionSupernet net(small_config());
  const auto in = random_input(2, 64, 48, 1);
  Rng rng(2);
  for (int i = 0; i < 10; ++i) {
    const auto out = net->forward(sample_fusion_genome(rng, 4), in);
    const auto expected = out.coarse * (1 - out.fusion_mask) + in.warped_garment * out.fusion_mask;
    EXPECT_LT((out.final - expected).abs().max().item<double>(), 1e-6);
  }
}

TEST(FusionSupernet, SaturatedMaskSelectsOneSource) {
  FusionSupernet net(small_config());
  const auto in = random_input(1, 64, 48, 3);
  const auto g = FusionGenome::unet(4);
  pin_mask_head(net, 100.0f);
  auto out = net->forward(g, in);
  EXPECT_LT((out.final - in.warped_garment).abs().max().item<double>(), 1e-6);
  pin_mask_head(net, -100.0f);
  out = net->forward(g, in);
  EXPECT_LT((out.final - out.coarse).abs().max().item<double>(), 1e-6);
}

TEST(FusionSupernet, SkipSources) {
  FusionSupernet net(small_config());
  EXPECT_EQ(net->skip_sources(FusionGenome::unet(4)), (std::vector<int>{0, 1, 2, 3}));
  using S = SkipChoice;
  EXPECT_EQ(net->skip_sources(genome_of({S::kPrevious, S::kNext, S::kPrevious, S::kNext})),
            (std::vector<int>{1, 0, 3, 2}));
  // boundary choices that would leave the encoder fall back to the same level
  EXPECT_EQ(net->skip_sources(genome_of({S::kNext, S::kSame, S::kSame, S::kPrevious})),
            (std::vector<int>{0, 1, 2, 3}));
}

TEST(FusionSupernet, CanonicalGenomesAreEquivalent) {
  FusionSupernet net(small_config());
  torch::NoGradGuard guard;
  const auto in = random_input(1, 64, 48, 4);
  using S = SkipChoice;
  const auto g = genome_of({S::kNext, S::kPrevious, S::kNext, S::kPrevious});
  ASSERT_FALSE(g.is_canonical());
  const auto a = net->forward(g, in);
  const auto b = net->forward(g.canonical(), in);
  EXPECT_TRUE(torch::equal(a.final, b.final));
  EXPECT_TRUE(torch::equal(a.fusion_mask, b.fusion_mask));
}

TEST(FusionSupernet, ProjectionsExistOnlyInsideTheEncoder) {
  FusionSupernet net(small_config());
  EXPECT_THROW(net->skip_projection(3, SkipChoice::kPrevious), ArgumentError);
  EXPECT_THROW(net->skip_projection(0, SkipChoice::kNext), ArgumentError);
  EXPECT_THROW(net->skip_projection(1, SkipChoice::kSame), ArgumentError);
  EXPECT_NE(net->skip_projection(1, SkipChoice::kPrevious).get(), net->skip_projection(1, SkipChoice::kNext).get());
}

TEST(FusionSupernet, OptimizerStepTouchesOnlySampledPath) {
  torch::manual_seed(5);
  FusionSupernet net(small_config());
  RandomConvFeatures features;
  const auto weights = default_layer_weights(features.layers());
  torch::optim::Adam opt(net->parameters(), torch::optim::AdamOptions(1e-3).betas({0.5, 0.999}));
  const auto in = random_input(2, 64, 48, 6);
  const auto person = torch::rand({2, 3, 64, 48});
  const auto target = (torch::rand({2, 1, 64, 48}) > 0.5).to(torch::kFloat32);
  Rng rng(7);
  for (int trial = 0; trial < 6; ++trial) {
    const auto genome = sample_fusion_genome(rng, 4);
    std::set<const void*> on_path;
    for (const auto& p : net->path_parameters(genome)) on_path.insert(p.unsafeGetTensorImpl());
    std::map<std::string, Tensor> before;
    for (const auto& p : net->named_parameters()) before[p.key()] = p.value().detach().clone();
    opt.zero_grad(true);
    fusion_loss(net->forward(genome, in), person, target, features, weights).total.backward();
    opt.step();
    int changed_on_path = 0;
    for (const auto& p : net->named_parameters()) {
      const bool same = torch::equal(before.at(p.key()), p.value());
      if (on_path.count(p.value().unsafeGetTensorImpl())) {
        changed_on_path += !same;
      } else {
        EXPECT_TRUE(same) << "off-path parameter moved: " << p.key() << " genome " << serialize(genome);
      }
    }
    EXPECT_GT(changed_on_path, 0);
  }
}

TEST(FusionSupernet, RandomGenomesProduceValidOutputs) {
  FusionSupernet net(small_config());
  torch::NoGradGuard guard;
  const auto in = random_input(1, 64, 48, 8);
  Rng rng(9);
  for (int i = 0; i < 200; ++i) {
    const auto g = sample_fusion_genome(rng, 4);
    const auto out = net->forward(g, in);
    ASSERT_EQ(out.coarse.sizes(), (std::vector<int64_t>{1, 3, 64, 48})) << serialize(g);
    ASSERT_EQ(out.fusion_mask.sizes(), (std::vector<int64_t>{1, 1, 64, 48})) << serialize(g);
    ASSERT_GE(out.coarse.min().item<float>(), -1.0f);
    ASSERT_LE(out.coarse.max().item<float>(), 1.0f);
    ASSERT_GE(out.fusion_mask.min().item<float>(), 0.0f);
    ASSERT_LE(out.fusion_mask.max().item<float>(), 1.0f);
    ASSERT_TRUE(torch::isfinite(out.final).all().item<bool>());
  }
}

TEST(FusionSupernet, RejectsMismatchedInputs) {
  FusionSupernet net(small_config());
  const auto in = random_input(1, 64, 48, 10);
  EXPECT_THROW(net->forward(FusionGenome::unet(5), in), ValidationError);
  EXPECT_THROW(net->forward(FusionGenome::unet(4), random_input(1, 32, 48, 10)), ValidationError);
  auto bad = in;
  bad.pose = torch::rand({1, 17, 64, 48});
  EXPECT_THROW(net->forward(FusionGenome::unet(4), bad), ValidationError);
}

TEST(FusionLoss, ZeroAtFixedPoint) {
  RandomConvFeatures features;
  const auto weights = default_layer_weights(features.layers());
  const auto person = torch::rand({1, 3, 32, 32});
  const auto target = (torch::rand({1, 1, 32, 32}) > 0.5).to(torch::kFloat32);
  const FusionOutput out{person, target, person};
  const auto parts = fusion_loss(out, person, target, features, weights);
  EXPECT_EQ(parts.total.item<double>(), 0.0);
}

TEST(FusionLoss, GradientMatchesFiniteDifferences) {
  RandomConvFeatures features;
  const auto weights = default_layer_weights(features.layers());
  const auto opts = torch::TensorOptions().dtype(torch::kFloat64);
  torch::manual_seed(11);
  const auto person = torch::rand({1, 3, 8, 8}, opts);
  const auto target = (torch::rand({1, 1, 8, 8}, opts) > 0.5).to(torch::kFloat64);
  const auto garment = torch::rand({1, 3, 8, 8}, opts);
  auto fn = [&](const std::vector<Tensor>& x) {
    FusionOutput out;
    out.coarse = torch::tanh(x[0]);
    out.fusion_mask = torch::sigmoid(x[1]);
    out.final = composite(out.coarse, out.fusion_mask, garment);
    return fusion_loss(out, person, target, features, weights).total;
  };
  const auto r = gradcheck(fn, {torch::randn({1, 3, 8, 8}, opts), torch::randn({1, 1, 8, 8}, opts)});
  EXPECT_LT(r.max_relative_error(), 1e-4);
}
