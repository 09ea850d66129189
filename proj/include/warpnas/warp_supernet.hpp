#pragma once

// Supernet for category-specific garment warping: a fixed mask encoder and
// five searchable warping cells that estimate a dense flow coarse-to-fine.

#include <array>
#include <span>
#include <utility>
#include <vector>

#include "warpnas/flow.hpp"
#include "warpnas/genome.hpp"
#include "warpnas/perceptual.hpp"

namespace warpnas {

struct WarpSupernetConfig {
  int64_t height = 96;
  int64_t width = 128;
  /// Output widths of the four strided encoder stages and the extra stride-1
  /// stage, in order of decreasing resolution.
  std::array<int64_t, 5> encoder_widths{16, 32, 32, 64, 64};
};

/// Encoder features ordered by warping cell: h/16, h/16, h/8, h/4, h/2.
struct MaskPyramid {
  std::array<Tensor, kWarpCells> levels;
};

class MaskEncoderImpl : public torch::nn::Module {
 public:
  explicit MaskEncoderImpl(const WarpSupernetConfig& cfg);
  MaskPyramid forward(const Tensor& mask) const;

 private:
  std::vector<ConvOp> stages_;
};
TORCH_MODULE(MaskEncoder);

struct WarpBlockOutput {
  Tensor warped_source;     // source features warped by this block's flow
  FlowField accumulated;    // composed flow after this block
  FlowField block_flow;     // the residual flow this block estimated
};

/// One warping block: estimates a residual flow from the concatenated source
/// and target features, warps the source by it and composes it onto the
/// running flow.
WarpBlockOutput warping_block(const Tensor& warped_source, const Tensor& target, const FlowField& accumulated,
                              const ConvOp& flow_conv);

struct WarpForwardOutput {
  FlowField final_flow;      // after the last cell, at h/2
  FlowField full_flow;       // final_flow upsampled to the input resolution
  Tensor warped_mask;        // source mask warped by full_flow, in [0,1]
  Tensor warped_garment;     // flat garment warped by full_flow
  std::vector<FlowField> cell_flows;   // accumulated flow after each cell
  std::vector<FlowField> block_flows;  // every residual flow, in execution order
};

class WarpSupernetImpl : public torch::nn::Module {
 public:
  explicit WarpSupernetImpl(const WarpSupernetConfig& cfg = {});

  const WarpSupernetConfig& config() const { return cfg_; }

  std::pair<MaskPyramid, MaskPyramid> encode_masks(const Tensor& source_mask, const Tensor& target_mask) const;

  WarpForwardOutput forward(const WarpGenome& genome, const Tensor& source_mask, const Tensor& target_mask,
                            const Tensor& garment) const;

  /// Flow convolution for `op` at position `block` of the branch with
  /// `blocks` blocks in `cell`. Throws ArgumentError for invalid codes.
  const ConvOp& flow_conv(int cell, int blocks, int block, WarpOp op) const;

  /// Parameters a forward pass with `genome` reads (encoders included).
  std::vector<Tensor> path_parameters(const WarpGenome& genome) const;

  /// Zero every flow convolution so the network starts as the identity warp.
  void zero_flow_convs();

 private:
  static std::size_t slot(int cell, int blocks, int block, int op);

  WarpSupernetConfig cfg_;
  MaskEncoder source_encoder_{nullptr};
  MaskEncoder target_encoder_{nullptr};
  std::vector<ConvOp> flow_convs_;
};
TORCH_MODULE(WarpSupernet);

struct WarpLossWeights {
  double perceptual = 0.1;
  double tv = 0.3;
  TvReduction tv_reduction = TvReduction::kMean;
  std::vector<double> layer_weights = default_layer_weights(6);
};

struct WarpLossParts {
  Tensor total;
  Tensor mask;        // mean |warped_mask - target_mask|
  Tensor perceptual;  // between warped and ground-truth garment
  Tensor tv;          // on final_flow
};

WarpLossParts warping_loss(const WarpForwardOutput& out, const Tensor& target_mask, const Tensor& warped_garment_gt,
                           const FeatureExtractor& features, const WarpLossWeights& weights = {});

}  // namespace warpnas
