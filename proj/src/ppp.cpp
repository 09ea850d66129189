#include "warpnas/ppp.hpp"

#include "warpnas/errors.hpp"

namespace warpnas {

namespace {

constexpr int64_t kConditionChannels = 1 + 18 + 3 + 3;

ConvSpec conv_spec(int kernel, int stride, int64_t in, int64_t out) {
  ConvSpec s;
  s.kernel = kernel;
  s.stride = stride;
  s.in_channels = in;
  s.out_channels = out;
  return s;
}

Tensor run_encoder(const std::vector<ConvOp>& stages, Tensor x) {
  for (const auto& s : stages) x = torch::relu(s->forward(x));
  return x;
}

}  // namespace

Tensor PppInput::condition() const {
  require_rank4(body_shape, "body_shape");
  require_rank4(pose, "pose");
  require_rank4(head, "head");
  require_rank4(garment, "garment");
  auto c = torch::cat({body_shape, pose, head, garment}, 1);
  if (c.size(1) != kConditionChannels) {
    throw ShapeError("PPP input has " + std::to_string(c.size(1)) + " channels, expected 25");
  }
  return c;
}

ResidualBlockImpl::ResidualBlockImpl(int64_t channels) {
  a_ = register_module("a", ConvOp(conv_spec(3, 1, channels, channels)));
  b_ = register_module("b", ConvOp(conv_spec(3, 1, channels, channels)));
}

Tensor ResidualBlockImpl::forward(const Tensor& x) const {
  return x + b_->forward(torch::relu(a_->forward(x)));
}

PppGeneratorImpl::PppGeneratorImpl(const PppConfig& cfg) : cfg_(cfg) {
  if (cfg_.base_width < 1 || cfg_.residual_blocks < 0 || cfg_.classes < 2) {
    throw ConfigError("invalid PPP generator configuration");
  }
  const int64_t w = cfg_.base_width;
  const std::array<int64_t, 3> widths{w, 2 * w, 4 * w};
  int64_t person_in = 1 + 18 + 3;
  int64_t garment_in = 3;
  for (int i = 0; i < 3; ++i) {
    const int stride = i == 0 ? 1 : 2;
    const int kernel = i == 0 ? 3 : 4;
    person_encoder_.push_back(register_module("person_enc" + std::to_string(i),
                                              ConvOp(conv_spec(kernel, stride, person_in, widths[i]))));
    garment_encoder_.push_back(register_module("garment_enc" + std::to_string(i),
                                               ConvOp(conv_spec(kernel, stride, garment_in, widths[i]))));
    person_in = garment_in = widths[i];
  }
  affine_head_ = register_module("affine_head", torch::nn::Linear(2 * widths[2], 6));
  {
    torch::NoGradGuard guard;
    affine_head_->weight.zero_();
    affine_head_->bias.copy_(torch::tensor({1.0f, 0.0f, 0.0f, 0.0f, 1.0f, 0.0f}));
  }
  merge_ = register_module("merge", ConvOp(conv_spec(1, 1, 2 * widths[2], widths[2])));
  for (int i = 0; i < cfg_.residual_blocks; ++i) {
    blocks_.push_back(register_module("res" + std::to_string(i), ResidualBlock(widths[2])));
  }
  decoder_.push_back(register_module("dec0", ConvOp(conv_spec(3, 1, widths[2], widths[1]))));
  decoder_.push_back(register_module("dec1", ConvOp(conv_spec(3, 1, widths[1], widths[0]))));
  logits_ = register_module("logits", ConvOp(conv_spec(3, 1, widths[0], cfg_.classes)));
}

Tensor PppGeneratorImpl::garment_affine(const Tensor& person_features, const Tensor& garment_features) const {
  auto pooled = torch::cat({person_features, garment_features}, 1).mean({2, 3});
  return torch::linear(pooled, affine_head_->weight, affine_head_->bias).view({-1, 2, 3});
}

Tensor PppGeneratorImpl::forward(const PppInput& input) const {
  const auto cond = input.condition();
  const auto person = run_encoder(person_encoder_, torch::cat({input.body_shape, input.pose, input.head}, 1));
  auto garment = run_encoder(garment_encoder_, input.garment);

  const auto theta = garment_affine(person, garment);
  const auto grid = torch::nn::functional::affine_grid(theta, garment.sizes(), /*align_corners=*/false);
  garment = torch::nn::functional::grid_sample(garment, grid,
                                               torch::nn::functional::GridSampleFuncOptions()
                                                   .mode(torch::kBilinear)
                                                   .padding_mode(torch::kBorder)
                                                   .align_corners(false));

  auto x = torch::relu(merge_->forward(torch::cat({person, garment}, 1)));
  for (const auto& b : blocks_) x = b->forward(x);
  for (const auto& d : decoder_) {
    x = bilinear_resize(x, x.size(2) * 2, x.size(3) * 2);
    x = torch::relu(d->forward(x));
  }
  if (x.size(2) != cond.size(2) || x.size(3) != cond.size(3)) {
    throw ShapeError("PPP input extents must be divisible by 4");
  }
  return logits_->forward(x);
}

PatchDiscriminatorImpl::PatchDiscriminatorImpl(int64_t condition_channels, int64_t parsing_channels, int64_t width) {
  const std::array<ConvSpec, 4> specs{
      conv_spec(4, 2, condition_channels + parsing_channels, width),
      conv_spec(4, 2, width, 2 * width),
      conv_spec(3, 1, 2 * width, 4 * width),
      conv_spec(3, 1, 4 * width, 1),
  };
  for (std::size_t i = 0; i < specs.size(); ++i) {
    layers_.push_back(register_module("layer" + std::to_string(i), ConvOp(specs[i])));
  }
}

std::vector<Tensor> PatchDiscriminatorImpl::forward(const Tensor& condition, const Tensor& parsing) const {
  std::vector<Tensor> out;
  auto x = torch::cat({condition, parsing}, 1);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    x = layers_[i]->forward(x);
    if (i + 1 < layers_.size()) x = torch::leaky_relu(x, 0.2);
    out.push_back(x);
  }
  return out;
}

PppLossParts ppp_losses(const Tensor& logits, const Tensor& real_labels, const Tensor& condition,
                        const DiscriminatorFn& disc, const PppLossWeights& weights) {
  require_rank4(logits, "logits");
  const int64_t classes = logits.size(1);
  const auto fake = torch::softmax(logits, 1);
  const auto real = torch::one_hot(real_labels, classes).permute({0, 3, 1, 2}).to(logits.dtype());

  PppLossParts p;
  p.pixel = torch::nn::functional::cross_entropy(logits, real_labels);

  const auto fake_features = disc(condition, fake);
  const auto real_features = disc(condition, real);
  if (fake_features.empty() || fake_features.size() != real_features.size()) {
    throw ArgumentError("discriminator must return the same non-empty layer list for real and fake inputs");
  }
  p.adversarial_g = (fake_features.back() - 1).pow(2).mean();
  p.feature_matching = torch::zeros({}, logits.options());
  for (std::size_t i = 0; i < fake_features.size(); ++i) {
    p.feature_matching = p.feature_matching + (real_features[i].detach() - fake_features[i]).abs().mean();
  }
  p.g_total = p.pixel + p.feature_matching + weights.adversarial * p.adversarial_g;

  const auto fake_detached = disc(condition, fake.detach());
  p.d_total = (real_features.back() - 1).pow(2).mean() + fake_detached.back().pow(2).mean();
  return p;
}

double pixel_accuracy(const Tensor& logits, const Tensor& labels) {
  return logits.argmax(1).eq(labels).to(torch::kFloat64).mean().item<double>();
}

}  // namespace warpnas
