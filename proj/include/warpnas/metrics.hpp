#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "warpnas/numerics.hpp"

namespace warpnas {

/// Gaussian-window SSIM parameters. Images are expected in [0,1], so the
/// dynamic range is 1.
struct SsimConfig {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

/// Normalised 1-D Gaussian taps (the 2-D window is their outer product).
Tensor gaussian_taps(const SsimConfig& cfg, torch::Dtype dtype = torch::kFloat64);

/// Per-sample SSIM of (N,C,H,W) images: local SSIM averaged over valid
/// window positions and then over channels.
Tensor ssim_per_sample(const Tensor& a, const Tensor& b, const SsimConfig& cfg = {});

/// Mean of ssim_per_sample over the batch.
double ssim(const Tensor& a, const Tensor& b, const SsimConfig& cfg = {});

/// Intersection over union of masks thresholded at 0.5; 1 when both are empty.
double mask_iou(const Tensor& a, const Tensor& b);

struct CurveSummary {
  double first = 0.0;
  double last = 0.0;
  double min = 0.0;
  double max = 0.0;
  std::size_t argmin = 0;
  /// Number of steps where the value went up.
  std::size_t increases = 0;
};

CurveSummary summarize_curve(std::span<const double> values);

struct MetricRow {
  std::string run_id;
  std::string split;
  std::string metric;
  double value = 0.0;
};

/// Tab-separated rows with a header line; appends when the file exists.
void append_metric_rows(const std::filesystem::path& path, std::span<const MetricRow> rows);
std::vector<MetricRow> read_metric_rows(const std::filesystem::path& path);

}  // namespace warpnas
