#include "warpnas/fitness.hpp"

#include "warpnas/errors.hpp"
#include "warpnas/metrics.hpp"
#include "warpnas/training.hpp"

namespace warpnas {

Tensor warp_ssim_per_sample(const WarpGenome& genome, const WarpSupernet& net, const Dataset& split,
                            int batch_size) {
  torch::NoGradGuard guard;
  std::vector<Tensor> parts;
  for (std::size_t b = 0; b < split.size(); b += static_cast<std::size_t>(batch_size)) {
    const auto batch = split.batch_range(b, b + static_cast<std::size_t>(batch_size));
    const auto out = net->forward(genome, batch.garment_mask, batch.target_mask, batch.garment);
    parts.push_back(ssim_per_sample(out.warped_garment, batch.warped_garment));
  }
  return parts.empty() ? torch::empty({0}, torch::kFloat64) : torch::cat(parts);
}

double fitness_warp(const WarpGenome& genome, const WarpSupernet& net, const Dataset& split, Category category,
                    int batch_size) {
  const auto subset = split.filter(category);
  if (subset.empty()) {
    throw ConfigError("no " + std::string(category_name(category)) + " samples in the validation split");
  }
  return warp_ssim_per_sample(genome, net, subset, batch_size).mean().item<double>();
}

double fitness_fusion(const FusionGenome& genome, const FusionSupernet& net, const Dataset& split, int batch_size) {
  if (split.empty()) throw ConfigError("fusion fitness needs a non-empty validation split");
  return validate_fusion(net, split, {genome}, batch_size);
}

}  // namespace warpnas
