#include "warpnas/perceptual.hpp"

#include <cmath>

#include "warpnas/errors.hpp"

namespace warpnas {

RandomConvFeatures::RandomConvFeatures(int64_t in_channels, uint64_t seed) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  struct Layout {
    int64_t out;
    int stride;
  };
  constexpr Layout kLayout[] = {{8, 1}, {16, 2}, {16, 1}, {32, 2}, {32, 1}, {32, 2}};
  int64_t in = in_channels;
  for (const auto& l : kLayout) {
    const double std = std::sqrt(2.0 / static_cast<double>(in * 9));
    Stage s;
    s.weight = torch::randn({l.out, in, 3, 3}, gen, torch::kFloat32) * std;
    s.bias = torch::zeros({l.out});
    s.stride = l.stride;
    stages_.push_back(std::move(s));
    in = l.out;
  }
}

std::vector<Tensor> RandomConvFeatures::features(const Tensor& image) const {
  require_rank4(image, "image");
  std::vector<Tensor> out;
  out.reserve(stages_.size());
  auto x = image;
  for (const auto& s : stages_) {
    namespace F = torch::nn::functional;
    x = torch::relu(F::conv2d(x, s.weight.to(image.scalar_type()),
                              F::Conv2dFuncOptions().bias(s.bias.to(image.scalar_type())).stride(s.stride).padding(1)));
    out.push_back(x);
  }
  return out;
}

std::vector<double> default_layer_weights(int layers) {
  std::vector<double> w;
  for (int k = 0; k < layers; ++k) w.push_back(std::ldexp(1.0, -(layers - 1 - k)));
  return w;
}

Tensor perceptual_loss(const FeatureExtractor& extractor, const Tensor& a, const Tensor& b,
                       std::span<const double> layer_weights) {
  if (static_cast<int>(layer_weights.size()) != extractor.layers()) {
    throw ArgumentError("perceptual_loss: " + std::to_string(layer_weights.size()) + " weights for " +
                        std::to_string(extractor.layers()) + " layers");
  }
  auto fa = extractor.features(a);
  auto fb = extractor.features(b);
  auto total = torch::zeros({}, a.options());
  for (std::size_t k = 0; k < fa.size(); ++k) {
    total = total + layer_weights[k] * (fa[k] - fb[k]).abs().mean();
  }
  return total;
}

}  // namespace warpnas
