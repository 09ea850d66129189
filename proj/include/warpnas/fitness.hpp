#pragma once

// SSIM fitness of a genome on a frozen supernet, used by the search.

#include <optional>

#include "warpnas/fusion_supernet.hpp"
#include "warpnas/synthdata.hpp"
#include "warpnas/warp_supernet.hpp"

namespace warpnas {

/// Mean SSIM(C~, C_t) over the samples of `category` in `split`.
/// Throws ConfigError when the category has no samples.
double fitness_warp(const WarpGenome& genome, const WarpSupernet& net, const Dataset& split, Category category,
                    int batch_size = 16);

/// Mean SSIM(I~, I) over the whole split, with the ground-truth warped
/// garment as C~. Throws ConfigError on an empty split.
double fitness_fusion(const FusionGenome& genome, const FusionSupernet& net, const Dataset& split,
                      int batch_size = 16);

/// Per-sample SSIM of the warped garment, in split order.
Tensor warp_ssim_per_sample(const WarpGenome& genome, const WarpSupernet& net, const Dataset& split,
                            int batch_size = 16);

}  // namespace warpnas
