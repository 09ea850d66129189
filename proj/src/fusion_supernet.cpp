#include "warpnas/fusion_supernet.hpp"

#include <algorithm>
#include <sstream>

#include "warpnas/errors.hpp"

namespace warpnas {

namespace {

ConvSpec conv_spec(int kernel, int stride, int64_t in, int64_t out) {
  ConvSpec s;
  s.kernel = kernel;
  s.stride = stride;
  s.in_channels = in;
  s.out_channels = out;
  return s;
}

void append_params(std::vector<Tensor>& out, const torch::nn::Module& m) {
  for (const auto& p : m.parameters()) out.push_back(p);
}

}  // namespace

int64_t FusionSupernetConfig::level_width(int level) const {
  return std::min<int64_t>(base_width << std::min(level, 3), 512);
}

Tensor FusionInput::concat() const {
  require_rank4(preserved_person, "preserved_person");
  require_rank4(warped_garment, "warped_garment");
  require_rank4(parsing, "parsing");
  require_rank4(pose, "pose");
  if (preserved_person.size(1) != 3 || warped_garment.size(1) != 3 || pose.size(1) != kPoseChannels) {
    throw ValidationError("fusion input expects 3+3+K+18 channels");
  }
  for (const auto* t : {&warped_garment, &parsing, &pose}) {
    if (t->size(0) != preserved_person.size(0) || t->size(2) != preserved_person.size(2) ||
        t->size(3) != preserved_person.size(3)) {
      throw ValidationError("fusion inputs disagree in batch or resolution");
    }
  }
  return torch::cat({preserved_person, warped_garment, parsing, pose}, 1);
}

Tensor composite(const Tensor& coarse, const Tensor& fusion_mask, const Tensor& warped_garment) {
  return coarse * (1 - fusion_mask) + warped_garment * fusion_mask;
}

FusionSupernetImpl::FusionSupernetImpl(const FusionSupernetConfig& cfg)
    : cfg_(cfg), levels_(cfg.resolved_levels()) {
  const int64_t unit = int64_t{1} << levels_;
  if (cfg_.height % unit != 0 || cfg_.width % unit != 0) {
    throw ConfigError("fusion supernet with " + std::to_string(levels_) + " levels needs a resolution divisible by " +
                      std::to_string(unit));
  }
  const int64_t in_channels = 3 + 3 + cfg_.parsing_classes + kPoseChannels;
  down_.resize(levels_);
  up_.resize(levels_);
  previous_proj_.resize(levels_, ConvOp(nullptr));
  next_proj_.resize(levels_, ConvOp(nullptr));
  int64_t prev = in_channels;
  for (int l = 0; l < levels_; ++l) {
    for (int op = 0; op < 3; ++op) {
      const int k = kernel_size(static_cast<DownOp>(op));
      down_[l].push_back(register_module("down" + std::to_string(l) + "_k" + std::to_string(k),
                                         ConvOp(conv_spec(k, 2, prev, cfg_.level_width(l)))));
    }
    prev = cfg_.level_width(l);
  }
  const int64_t deepest = cfg_.level_width(levels_ - 1);
  bottleneck_ = register_module("bottleneck", ConvOp(conv_spec(3, 1, deepest, deepest)));

  // Decoder level d runs at the resolution of encoder level d, receives the
  // previous decoder output plus a skip feature with level_width(d) channels
  // and upsamples to the resolution of level d-1.
  for (int d = levels_ - 1; d >= 0; --d) {
    const int64_t from_below = d == levels_ - 1 ? deepest : cfg_.level_width(d);
    const int64_t in = from_below + cfg_.level_width(d);
    const int64_t out = d > 0 ? cfg_.level_width(d - 1) : std::max<int64_t>(cfg_.base_width / 2, 8);
    for (int op = 0; op < 2; ++op) {
      const int k = kernel_size(static_cast<UpOp>(op));
      up_[d].push_back(
          register_module("up" + std::to_string(d) + "_k" + std::to_string(k), ConvOp(conv_spec(k, 1, in, out))));
    }
    if (d + 1 < levels_) {
      previous_proj_[d] = register_module("skip" + std::to_string(d) + "_previous",
                                          ConvOp(conv_spec(1, 1, cfg_.level_width(d + 1), cfg_.level_width(d))));
    }
    if (d > 0) {
      next_proj_[d] = register_module("skip" + std::to_string(d) + "_next",
                                      ConvOp(conv_spec(1, 1, cfg_.level_width(d - 1), cfg_.level_width(d))));
    }
  }
  const int64_t head_in = std::max<int64_t>(cfg_.base_width / 2, 8);
  coarse_head_ = register_module("coarse_head", ConvOp(conv_spec(3, 1, head_in, 3)));
  mask_head_ = register_module("mask_head", ConvOp(conv_spec(3, 1, head_in, 1)));
}

void FusionSupernetImpl::check_genome(const FusionGenome& genome) const {
  genome.validate();
  if (genome.levels() != levels_) {
    throw ValidationError("fusion genome has " + std::to_string(genome.levels()) + " levels, supernet has " +
                          std::to_string(levels_));
  }
}

std::vector<int> FusionSupernetImpl::skip_sources(const FusionGenome& genome) const {
  check_genome(genome);
  const auto g = genome.canonical();
  std::vector<int> sources(levels_);
  for (int d = 0; d < levels_; ++d) {
    switch (g.skips[d]) {
      case SkipChoice::kSame: sources[d] = d; break;
      case SkipChoice::kPrevious: sources[d] = d + 1; break;
      case SkipChoice::kNext: sources[d] = d - 1; break;
    }
  }
  return sources;
}

const ConvOp& FusionSupernetImpl::skip_projection(int level, SkipChoice choice) const {
  if (level < 0 || level >= levels_ || choice == SkipChoice::kSame) {
    throw ArgumentError("no skip projection for level " + std::to_string(level));
  }
  const auto& proj = choice == SkipChoice::kPrevious ? previous_proj_[level] : next_proj_[level];
  if (!proj) throw ArgumentError("skip choice points outside the encoder at level " + std::to_string(level));
  return proj;
}

FusionOutput FusionSupernetImpl::forward(const FusionGenome& genome, const FusionInput& input) const {
  check_genome(genome);
  const auto g = genome.canonical();
  auto x = input.concat();
  if (x.size(2) != cfg_.height || x.size(3) != cfg_.width) {
    throw ValidationError("fusion supernet expects " + std::to_string(cfg_.height) + "x" + std::to_string(cfg_.width) +
                     " inputs");
  }
  if (x.size(1) != 3 + 3 + cfg_.parsing_classes + kPoseChannels) {
    throw ValidationError("fusion input has " + std::to_string(x.size(1)) + " channels");
  }

  std::vector<Tensor> enc(levels_);
  for (int l = 0; l < levels_; ++l) {
    x = torch::leaky_relu(down_[l][static_cast<int>(g.down_ops[l])]->forward(x), 0.2);
    enc[l] = x;
  }
  x = torch::leaky_relu(bottleneck_->forward(x), 0.2);

  const auto sources = skip_sources(g);
  for (int d = levels_ - 1; d >= 0; --d) {
    Tensor skip = enc[sources[d]];
    if (sources[d] != d) {
      skip = bilinear_resize(skip, enc[d].size(2), enc[d].size(3));
      skip = skip_projection(d, g.skips[d])->forward(skip);
    }
    auto merged = torch::cat({x, skip}, 1);
    merged = bilinear_resize(merged, merged.size(2) * 2, merged.size(3) * 2);
    x = torch::relu(up_[d][static_cast<int>(g.up_ops[d])]->forward(merged));
  }

  FusionOutput out;
  out.coarse = torch::tanh(coarse_head_->forward(x));
  out.fusion_mask = torch::sigmoid(mask_head_->forward(x));
  out.final = composite(out.coarse, out.fusion_mask, input.warped_garment);
  return out;
}

std::vector<Tensor> FusionSupernetImpl::path_parameters(const FusionGenome& genome) const {
  check_genome(genome);
  const auto g = genome.canonical();
  std::vector<Tensor> params;
  for (int l = 0; l < levels_; ++l) {
    append_params(params, *down_[l][static_cast<int>(g.down_ops[l])]);
    append_params(params, *up_[l][static_cast<int>(g.up_ops[l])]);
    if (g.skips[l] != SkipChoice::kSame) append_params(params, *skip_projection(l, g.skips[l]));
  }
  append_params(params, *bottleneck_);
  append_params(params, *coarse_head_);
  append_params(params, *mask_head_);
  return params;
}

FusionLossParts fusion_loss(const FusionOutput& out, const Tensor& person, const Tensor& target_mask,
                            const FeatureExtractor& features, std::span<const double> layer_weights) {
  FusionLossParts p;
  p.l1_coarse = (person - out.coarse).abs().mean();
  p.perceptual_coarse = perceptual_loss(features, out.coarse, person, layer_weights);
  p.l1_final = (person - out.final).abs().mean();
  p.perceptual_final = perceptual_loss(features, out.final, person, layer_weights);
  p.mask = (target_mask - out.fusion_mask).abs().mean();
  p.total = p.l1_coarse + p.perceptual_coarse + p.l1_final + p.perceptual_final + p.mask;
  return p;
}

}  // namespace warpnas
