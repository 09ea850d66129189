#pragma once

#include <filesystem>

#include "warpnas/numerics.hpp"

namespace warpnas {

/// Dense backward displacement field, (N, 2, H, W), pixel units at its own
/// resolution. Channel 0 is dx (columns), channel 1 is dy (rows).
class FlowField {
 public:
  FlowField() = default;
  explicit FlowField(Tensor values);

  static FlowField zeros(int64_t batch, int64_t height, int64_t width,
                         const torch::TensorOptions& options = torch::kFloat32);

  const Tensor& values() const { return values_; }
  int64_t batch() const { return values_.size(0); }
  int64_t height() const { return values_.size(2); }
  int64_t width() const { return values_.size(3); }
  bool defined() const { return values_.defined(); }

 private:
  Tensor values_;
};

Tensor grid_warp(const Tensor& x, const FlowField& flow);

/// Flow equivalent to warping by `accumulated` and then by `next`:
/// result(p) = accumulated(p + next(p)) + next(p).
FlowField compose_flows(const FlowField& accumulated, const FlowField& next);

/// Doubles the resolution and the displacement magnitudes.
FlowField upsample_flow(const FlowField& flow, int factor = 2);

enum class TvReduction {
  /// Sum of absolute forward differences per sample, averaged over the batch.
  kSum,
  /// The same sum divided by the number of flow elements (2*H*W).
  kMean,
};

/// Total variation: L1 norm of forward differences along x and y over both
/// channels. Boundary rows/columns contribute no term.
Tensor tv_loss(const FlowField& flow, TvReduction reduction = TvReduction::kSum);

/// Single-sample flow raster: "WFLO", uint32 height, uint32 width, then
/// float32 values channel-major (dx plane, dy plane), little-endian.
void write_flow(const std::filesystem::path& path, const FlowField& flow);
FlowField read_flow(const std::filesystem::path& path);

}  // namespace warpnas
