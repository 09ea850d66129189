#pragma once

// Differentiable tensor operations shared by every network in the project.
// Tensors follow the (batch, channel, height, width) layout. Autograd is
// provided by LibTorch; this header owns the operation contracts and the
// finite-difference gradient checker.

#include <torch/torch.h>

#include <cstdint>
#include <functional>
#include <string_view>
#include <vector>

namespace warpnas {

using Tensor = torch::Tensor;

/// Shape of one convolution. Padding is implied: stride 1 keeps the spatial
/// size, stride 2 halves it (inputs with even extents).
struct ConvSpec {
  int kernel = 3;
  bool depthwise_separable = false;
  int stride = 1;
  int64_t in_channels = 1;
  int64_t out_channels = 1;

  int padding() const { return (kernel - 1) / 2; }
  /// Throws ArgumentError when the combination is outside the supported set.
  void validate() const;
};

/// Parameters of one convolution. `depthwise` is only set for separable
/// convolutions, where `weight` is then the 1x1 pointwise kernel.
struct ConvWeights {
  Tensor weight;
  Tensor bias;
  Tensor depthwise;
};

/// Throws ShapeError unless `x` is 4-D; `name` identifies the operand.
void require_rank4(const Tensor& x, std::string_view name);

/// Throws ValidationError if `x` holds NaN or Inf.
void require_finite(const Tensor& x, std::string_view name);

Tensor conv2d(const Tensor& x, const ConvSpec& spec, const ConvWeights& weights);

/// Bilinear resize with the align-corners=false convention.
Tensor bilinear_resize(const Tensor& x, int64_t target_h, int64_t target_w);

/// Backward warp: out(p) = x sampled bilinearly at p + flow(p). `flow` is
/// (N, 2, H, W) in pixel units, channel 0 = dx, channel 1 = dy. Samples
/// outside the image are clamped to the border.
Tensor grid_warp(const Tensor& x, const Tensor& flow);

/// A convolution module whose parameters follow a ConvSpec.
class ConvOpImpl : public torch::nn::Module {
 public:
  explicit ConvOpImpl(const ConvSpec& spec);

  Tensor forward(const Tensor& x) const;
  const ConvSpec& spec() const { return spec_; }
  const ConvWeights& weights() const { return weights_; }

  /// Zero the last linear stage so the op outputs exactly its (zero) bias.
  void zero_output();

 private:
  ConvSpec spec_;
  ConvWeights weights_;
};
TORCH_MODULE(ConvOp);

struct GradCheckResult {
  /// Worst relative error per input: max|analytic - numeric| / max|numeric|.
  std::vector<double> relative_errors;
  double max_relative_error() const;
  bool passed(double tolerance) const { return max_relative_error() < tolerance; }
};

using DifferentiableFn = std::function<Tensor(const std::vector<Tensor>&)>;

/// Compares autograd gradients against central finite differences. The
/// inputs are cast to float64; non-scalar outputs are reduced with a fixed
/// random projection so every output element contributes.
GradCheckResult gradcheck(const DifferentiableFn& fn, const std::vector<Tensor>& inputs,
                          double step = 1e-6, uint64_t seed = 0);

}  // namespace warpnas
