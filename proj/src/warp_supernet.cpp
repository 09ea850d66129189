#include "warpnas/warp_supernet.hpp"

#include <sstream>

#include "warpnas/errors.hpp"

namespace warpnas {

namespace {

Tensor lrelu(const Tensor& x) { return torch::leaky_relu(x, 0.2); }

ConvSpec flow_spec(WarpOp op, int64_t in_channels) {
  ConvSpec s;
  s.kernel = (op == WarpOp::kConv1x1 || op == WarpOp::kSeparable1x1) ? 1 : 3;
  s.depthwise_separable = op == WarpOp::kSeparable1x1 || op == WarpOp::kSeparable3x3;
  s.in_channels = in_channels;
  s.out_channels = 2;
  return s;
}

void append_params(std::vector<Tensor>& out, const torch::nn::Module& m) {
  for (const auto& p : m.parameters()) out.push_back(p);
}

}  // namespace

MaskEncoderImpl::MaskEncoderImpl(const WarpSupernetConfig& cfg) {
  int64_t in = 1;
  for (std::size_t i = 0; i < cfg.encoder_widths.size(); ++i) {
    ConvSpec s;
    s.kernel = 3;
    s.stride = i < 4 ? 2 : 1;
    s.in_channels = in;
    s.out_channels = cfg.encoder_widths[i];
    stages_.push_back(register_module("stage" + std::to_string(i), ConvOp(s)));
    in = s.out_channels;
  }
}

MaskPyramid MaskEncoderImpl::forward(const Tensor& mask) const {
  std::array<Tensor, 5> feats;
  auto x = mask;
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    x = lrelu(stages_[i]->forward(x));
    feats[i] = x;
  }
  // cells run coarse-to-fine: extra stage, then the strided stages backwards
  return MaskPyramid{{feats[4], feats[3], feats[2], feats[1], feats[0]}};
}

WarpBlockOutput warping_block(const Tensor& warped_source, const Tensor& target, const FlowField& accumulated,
                              const ConvOp& flow_conv) {
  if (warped_source.sizes() != target.sizes()) {
    std::ostringstream err;
    err << "warping_block: source " << warped_source.sizes() << " and target " << target.sizes() << " differ";
    throw ShapeError(err.str());
  }
  FlowField flow(flow_conv->forward(torch::cat({warped_source, target}, 1)));
  WarpBlockOutput out;
  out.warped_source = grid_warp(warped_source, flow);
  out.accumulated = compose_flows(accumulated, flow);
  out.block_flow = flow;
  return out;
}

WarpSupernetImpl::WarpSupernetImpl(const WarpSupernetConfig& cfg) : cfg_(cfg) {
  if (cfg_.height % 16 != 0 || cfg_.width % 16 != 0) {
    throw ConfigError("warp supernet resolution must be divisible by 16, got " + std::to_string(cfg_.height) + "x" +
                      std::to_string(cfg_.width));
  }
  source_encoder_ = register_module("source_encoder", MaskEncoder(cfg_));
  target_encoder_ = register_module("target_encoder", MaskEncoder(cfg_));
  // Channel width per cell follows the pyramid order.
  const std::array<int64_t, kWarpCells> widths{cfg_.encoder_widths[4], cfg_.encoder_widths[3],
                                                cfg_.encoder_widths[2], cfg_.encoder_widths[1],
                                                cfg_.encoder_widths[0]};
  flow_convs_.resize(slot(kWarpCells, 1, 0, 0), ConvOp(nullptr));
  for (int cell = 0; cell < kWarpCells; ++cell) {
    for (int blocks = 1; blocks <= kMaxBlocksPerCell; ++blocks) {
      for (int block = 0; block < blocks; ++block) {
        for (int op = 0; op < kWarpOpCount; ++op) {
          std::ostringstream name;
          name << "cell" << cell << "_branch" << blocks << "_block" << block << "_op" << op;
          auto conv = ConvOp(flow_spec(static_cast<WarpOp>(op), 2 * widths[cell]));
          conv->zero_output();
          flow_convs_[slot(cell, blocks, block, op)] = register_module(name.str(), conv);
        }
      }
    }
  }
}

std::size_t WarpSupernetImpl::slot(int cell, int blocks, int block, int op) {
  // 6 block positions per cell (1 + 2 + 3), 4 ops each
  const int branch_offset = blocks * (blocks - 1) / 2;
  return static_cast<std::size_t>(((cell * 6) + branch_offset + block) * kWarpOpCount + op);
}

const ConvOp& WarpSupernetImpl::flow_conv(int cell, int blocks, int block, WarpOp op) const {
  const int code = static_cast<int>(op);
  if (code < 0 || code >= kWarpOpCount) throw ArgumentError("invalid warp op code " + std::to_string(code));
  if (cell < 0 || cell >= kWarpCells || blocks < 1 || blocks > kMaxBlocksPerCell || block < 0 || block >= blocks) {
    throw ArgumentError("invalid warping block position");
  }
  return flow_convs_[slot(cell, blocks, block, code)];
}

void WarpSupernetImpl::zero_flow_convs() {
  for (auto& c : flow_convs_) c->zero_output();
}

std::pair<MaskPyramid, MaskPyramid> WarpSupernetImpl::encode_masks(const Tensor& source_mask,
                                                                   const Tensor& target_mask) const {
  require_rank4(source_mask, "source_mask");
  require_rank4(target_mask, "target_mask");
  if (source_mask.sizes() != target_mask.sizes() || source_mask.size(1) != 1) {
    std::ostringstream err;
    err << "encode_masks: masks must be single-channel with equal shapes, got " << source_mask.sizes() << " and "
        << target_mask.sizes();
    throw ShapeError(err.str());
  }
  return {source_encoder_->forward(source_mask), target_encoder_->forward(target_mask)};
}

WarpForwardOutput WarpSupernetImpl::forward(const WarpGenome& genome, const Tensor& source_mask,
                                            const Tensor& target_mask, const Tensor& garment) const {
  genome.validate();
  require_rank4(garment, "garment");
  if (source_mask.size(2) != cfg_.height || source_mask.size(3) != cfg_.width ||
      garment.size(2) != cfg_.height || garment.size(3) != cfg_.width) {
    throw ShapeError("warp supernet expects " + std::to_string(cfg_.height) + "x" + std::to_string(cfg_.width) +
                     " inputs");
  }
  auto [source, target] = encode_masks(source_mask, target_mask);

  WarpForwardOutput out;
  const auto& first = source.levels[0];
  FlowField flow = FlowField::zeros(first.size(0), first.size(2), first.size(3), first.options());
  for (int cell = 0; cell < kWarpCells; ++cell) {
    const auto& src = source.levels[cell];
    const auto& tgt = target.levels[cell];
    Tensor warped = src;
    if (cell > 0) {
      if (src.size(2) != flow.height()) flow = upsample_flow(flow);
      warped = grid_warp(src, flow);
    }
    const auto& ops = genome.cells[cell].ops;
    for (int block = 0; block < static_cast<int>(ops.size()); ++block) {
      auto step = warping_block(warped, tgt, flow, flow_conv(cell, genome.cells[cell].blocks(), block, ops[block]));
      warped = step.warped_source;
      flow = step.accumulated;
      out.block_flows.push_back(step.block_flow);
    }
    out.cell_flows.push_back(flow);
  }
  out.final_flow = flow;
  out.full_flow = upsample_flow(flow);
  out.warped_garment = grid_warp(garment, out.full_flow);
  out.warped_mask = grid_warp(source_mask, out.full_flow);
  return out;
}

std::vector<Tensor> WarpSupernetImpl::path_parameters(const WarpGenome& genome) const {
  genome.validate();
  std::vector<Tensor> params;
  append_params(params, *source_encoder_);
  append_params(params, *target_encoder_);
  for (int cell = 0; cell < kWarpCells; ++cell) {
    const auto& ops = genome.cells[cell].ops;
    for (int block = 0; block < static_cast<int>(ops.size()); ++block) {
      append_params(params, *flow_conv(cell, static_cast<int>(ops.size()), block, ops[block]));
    }
  }
  return params;
}

WarpLossParts warping_loss(const WarpForwardOutput& out, const Tensor& target_mask, const Tensor& warped_garment_gt,
                           const FeatureExtractor& features, const WarpLossWeights& weights) {
  WarpLossParts parts;
  parts.mask = (out.warped_mask - target_mask).abs().mean();
  parts.perceptual = perceptual_loss(features, out.warped_garment, warped_garment_gt, weights.layer_weights);
  parts.tv = tv_loss(out.final_flow, weights.tv_reduction);
  parts.total = parts.mask + weights.perceptual * parts.perceptual + weights.tv * parts.tv;
  return parts;
}

}  // namespace warpnas
