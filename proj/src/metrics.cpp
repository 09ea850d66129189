#include "warpnas/metrics.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "warpnas/errors.hpp"

namespace warpnas {

namespace F = torch::nn::functional;

Tensor gaussian_taps(const SsimConfig& cfg, torch::Dtype dtype) {
  auto x = torch::arange(cfg.window, torch::kFloat64) - (cfg.window - 1) / 2.0;
  auto g = torch::exp(-(x * x) / (2.0 * cfg.sigma * cfg.sigma));
  return (g / g.sum()).to(dtype);
}

Tensor ssim_per_sample(const Tensor& a, const Tensor& b, const SsimConfig& cfg) {
  require_rank4(a, "a");
  require_rank4(b, "b");
  if (a.sizes() != b.sizes()) {
    std::ostringstream err;
    err << "ssim: image shapes differ, " << a.sizes() << " vs " << b.sizes();
    throw ShapeError(err.str());
  }
  if (a.size(2) < cfg.window || a.size(3) < cfg.window) {
    throw ShapeError("ssim: images smaller than the " + std::to_string(cfg.window) + "px window");
  }
  const auto channels = a.size(1);
  auto taps = gaussian_taps(cfg, a.scalar_type());
  auto kx = taps.view({1, 1, 1, cfg.window}).expand({channels, 1, 1, cfg.window}).contiguous();
  auto ky = taps.view({1, 1, cfg.window, 1}).expand({channels, 1, cfg.window, 1}).contiguous();
  auto blur = [&](const Tensor& t) {
    auto opts = F::Conv2dFuncOptions().groups(channels);
    return F::conv2d(F::conv2d(t, kx, opts), ky, opts);
  };
  const double c1 = std::pow(cfg.k1 * cfg.dynamic_range, 2);
  const double c2 = std::pow(cfg.k2 * cfg.dynamic_range, 2);
  auto mu_a = blur(a);
  auto mu_b = blur(b);
  auto var_a = blur(a * a) - mu_a * mu_a;
  auto var_b = blur(b * b) - mu_b * mu_b;
  auto cov = blur(a * b) - mu_a * mu_b;
  auto map = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
  return map.mean({1, 2, 3});
}

double ssim(const Tensor& a, const Tensor& b, const SsimConfig& cfg) {
  torch::NoGradGuard guard;
  return ssim_per_sample(a, b, cfg).mean().item<double>();
}

double mask_iou(const Tensor& a, const Tensor& b) {
  if (a.sizes() != b.sizes()) throw ShapeError("mask_iou: mask shapes differ");
  torch::NoGradGuard guard;
  auto ma = a >= 0.5;
  auto mb = b >= 0.5;
  const double uni = (ma | mb).sum().item<double>();
  if (uni == 0.0) return 1.0;
  return (ma & mb).sum().item<double>() / uni;
}

CurveSummary summarize_curve(std::span<const double> values) {
  CurveSummary s;
  if (values.empty()) return s;
  s.first = s.min = s.max = values.front();
  s.last = values.back();
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] < s.min) {
      s.min = values[i];
      s.argmin = i;
    }
    s.max = std::max(s.max, values[i]);
    if (i > 0 && values[i] > values[i - 1]) ++s.increases;
  }
  return s;
}

void append_metric_rows(const std::filesystem::path& path, std::span<const MetricRow> rows) {
  const bool fresh = !std::filesystem::exists(path);
  std::ofstream out(path, std::ios::app);
  if (!out) throw IoError("cannot append to " + path.string());
  if (fresh) out << "run_id\tsplit\tmetric\tvalue\n";
  out << std::setprecision(9);
  for (const auto& r : rows) out << r.run_id << '\t' << r.split << '\t' << r.metric << '\t' << r.value << '\n';
}

std::vector<MetricRow> read_metric_rows(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<MetricRow> rows;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    MetricRow r;
    std::string value;
    if (!std::getline(fields, r.run_id, '\t') || !std::getline(fields, r.split, '\t') ||
        !std::getline(fields, r.metric, '\t') || !std::getline(fields, value)) {
      throw IoError("malformed metric row in " + path.string() + ": " + line);
    }
    r.value = std::stod(value);
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace warpnas
