#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "warpnas/numerics.hpp"

namespace warpnas {

/// Source of the multi-layer feature maps compared by the perceptual loss.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::vector<Tensor> features(const Tensor& image) const = 0;
  virtual int layers() const = 0;
};

/// Frozen six-stage conv/ReLU stack with He-normal weights drawn from a fixed
/// seed. Gradients flow to the input only.
class RandomConvFeatures final : public FeatureExtractor {
 public:
  static constexpr uint64_t kDefaultSeed = 0x5eed'f00dULL;

  explicit RandomConvFeatures(int64_t in_channels = 3, uint64_t seed = kDefaultSeed);

  std::vector<Tensor> features(const Tensor& image) const override;
  int layers() const override { return static_cast<int>(stages_.size()); }

 private:
  struct Stage {
    Tensor weight;
    Tensor bias;
    int stride;
  };
  std::vector<Stage> stages_;
};

/// Layer k of `layers` gets 1 / 2^(layers-1-k): the deepest layer weighs 1.
std::vector<double> default_layer_weights(int layers);

/// sum_k w_k * mean|phi_k(a) - phi_k(b)|
Tensor perceptual_loss(const FeatureExtractor& extractor, const Tensor& a, const Tensor& b,
                       std::span<const double> layer_weights);

}  // namespace warpnas
