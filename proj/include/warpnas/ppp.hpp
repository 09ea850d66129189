#pragma once

// Partial parsing prediction: estimates the semantic layout of the body
// regions a try-on changes, from the body shape, pose, head and the flat
// garment. Trained adversarially against a conditional patch discriminator.

#include <functional>
#include <vector>

#include "warpnas/numerics.hpp"

namespace warpnas {

struct PppConfig {
  int64_t base_width = 32;
  int residual_blocks = 6;
  int64_t classes = 5;
  int64_t disc_width = 32;
};

struct PppInput {
  Tensor body_shape;  // S (N,1,H,W)
  Tensor pose;        // P (N,18,H,W)
  Tensor head;        // H (N,3,H,W)
  Tensor garment;     // C (N,3,H,W)

  /// The 25-channel condition seen by the discriminator.
  Tensor condition() const;
};

class ResidualBlockImpl : public torch::nn::Module {
 public:
  explicit ResidualBlockImpl(int64_t channels);
  Tensor forward(const Tensor& x) const;

 private:
  ConvOp a_{nullptr};
  ConvOp b_{nullptr};
};
TORCH_MODULE(ResidualBlock);

class PppGeneratorImpl : public torch::nn::Module {
 public:
  explicit PppGeneratorImpl(const PppConfig& cfg = {});

  /// Logits over the partial classes, (N, classes, H, W).
  Tensor forward(const PppInput& input) const;

  /// Affine parameters (N,2,3) the garment branch applies to its features.
  Tensor garment_affine(const Tensor& person_features, const Tensor& garment_features) const;

  const PppConfig& config() const { return cfg_; }

 private:
  PppConfig cfg_;
  std::vector<ConvOp> person_encoder_;
  std::vector<ConvOp> garment_encoder_;
  torch::nn::Linear affine_head_{nullptr};
  ConvOp merge_{nullptr};
  std::vector<ResidualBlock> blocks_;
  std::vector<ConvOp> decoder_;
  ConvOp logits_{nullptr};
};
TORCH_MODULE(PppGenerator);

/// Four-layer conditional patch discriminator. forward returns the output
/// of every layer; the last one is the patch score map.
class PatchDiscriminatorImpl : public torch::nn::Module {
 public:
  PatchDiscriminatorImpl(int64_t condition_channels, int64_t parsing_channels, int64_t width = 32);
  std::vector<Tensor> forward(const Tensor& condition, const Tensor& parsing) const;

 private:
  std::vector<ConvOp> layers_;
};
TORCH_MODULE(PatchDiscriminator);

using DiscriminatorFn = std::function<std::vector<Tensor>(const Tensor& condition, const Tensor& parsing)>;

struct PppLossParts {
  Tensor g_total;
  Tensor pixel;
  Tensor feature_matching;
  Tensor adversarial_g;
  Tensor d_total;
};

struct PppLossWeights {
  double adversarial = 0.1;
};

/// Generator and discriminator objectives. `real_labels` is (N,H,W) int64.
/// The discriminator sees softmax probabilities for the generated parsing
/// and one-hot maps for the real one. d_total is computed on a detached
/// generator output so it only reaches the discriminator.
PppLossParts ppp_losses(const Tensor& logits, const Tensor& real_labels, const Tensor& condition,
                        const DiscriminatorFn& disc, const PppLossWeights& weights = {});

/// Fraction of pixels whose argmax matches the label.
double pixel_accuracy(const Tensor& logits, const Tensor& labels);

}  // namespace warpnas
