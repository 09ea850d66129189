#pragma once

// Supernet for the fusion stage: an encoder-decoder whose skip connections
// and down/up-sampling convolutions are chosen by a FusionGenome.

#include <span>
#include <vector>

#include "warpnas/genome.hpp"
#include "warpnas/perceptual.hpp"

namespace warpnas {

inline constexpr int64_t kPoseChannels = 18;

struct FusionSupernetConfig {
  int64_t height = 96;
  int64_t width = 128;
  /// 0 selects the depth from the height (see fusion_levels_for_height).
  int levels = 0;
  int64_t base_width = 64;
  int64_t parsing_classes = 8;

  int resolved_levels() const { return levels > 0 ? levels : fusion_levels_for_height(height); }
  /// 64 * 2^min(level, 3) for the default base width, capped at 512.
  int64_t level_width(int level) const;
};

struct FusionInput {
  Tensor preserved_person;  // I'  (N,3,H,W)
  Tensor warped_garment;    // C~  (N,3,H,W)
  Tensor parsing;           // M_h (N,K,H,W) one-hot
  Tensor pose;              // P   (N,18,H,W)

  Tensor concat() const;
};

struct FusionOutput {
  Tensor coarse;       // I_c in [-1,1]
  Tensor fusion_mask;  // M_f in [0,1]
  Tensor final;        // I~ = I_c (1 - M_f) + C~ M_f
};

/// I_c * (1 - M_f) + C~ * M_f, with M_f broadcast over colour channels.
Tensor composite(const Tensor& coarse, const Tensor& fusion_mask, const Tensor& warped_garment);

class FusionSupernetImpl : public torch::nn::Module {
 public:
  explicit FusionSupernetImpl(const FusionSupernetConfig& cfg = {});

  const FusionSupernetConfig& config() const { return cfg_; }
  int levels() const { return levels_; }

  FusionOutput forward(const FusionGenome& genome, const FusionInput& input) const;

  /// Encoder level feeding each decoder level under `genome` (after
  /// canonicalisation).
  std::vector<int> skip_sources(const FusionGenome& genome) const;

  std::vector<Tensor> path_parameters(const FusionGenome& genome) const;

  /// Parameters of the 1x1 projection bridging `source_level` into decoder
  /// level `level`.
  const ConvOp& skip_projection(int level, SkipChoice choice) const;

  /// The two output heads, exposed so tests can pin them.
  const ConvOp& coarse_head() const { return coarse_head_; }
  const ConvOp& mask_head() const { return mask_head_; }

 private:
  void check_genome(const FusionGenome& genome) const;

  FusionSupernetConfig cfg_;
  int levels_;
  std::vector<std::vector<ConvOp>> down_;   // [level][DownOp]
  ConvOp bottleneck_{nullptr};
  std::vector<std::vector<ConvOp>> up_;     // [level][UpOp]
  std::vector<ConvOp> previous_proj_;       // [level]; undefined at the deepest level
  std::vector<ConvOp> next_proj_;           // [level]; undefined at level 0
  ConvOp coarse_head_{nullptr};
  ConvOp mask_head_{nullptr};
};
TORCH_MODULE(FusionSupernet);

struct FusionLossParts {
  Tensor total;
  Tensor l1_coarse;
  Tensor perceptual_coarse;
  Tensor l1_final;
  Tensor perceptual_final;
  Tensor mask;
};

/// Five unit-weighted terms: L1 and perceptual on both I_c and I~, plus
/// L1 between the fusion mask and the target garment mask.
FusionLossParts fusion_loss(const FusionOutput& out, const Tensor& person, const Tensor& target_mask,
                            const FeatureExtractor& features,
                            std::span<const double> layer_weights);

}  // namespace warpnas
