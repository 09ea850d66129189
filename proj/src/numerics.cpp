#include "warpnas/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "warpnas/errors.hpp"

namespace warpnas {

namespace F = torch::nn::functional;

std::string_view error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kShape: return "shape";
    case ErrorKind::kArgument: return "argument";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kParse: return "parse";
    case ErrorKind::kValidation: return "validation";
    case ErrorKind::kMissingDependency: return "missing-dependency";
    case ErrorKind::kIo: return "io";
  }
  return "unknown";
}

void ConvSpec::validate() const {
  std::ostringstream err;
  if (kernel != 1 && kernel != 3 && kernel != 4 && kernel != 5) {
    err << "conv kernel " << kernel << " not in {1,3,4,5}";
  } else if (stride != 1 && stride != 2) {
    err << "conv stride " << stride << " not in {1,2}";
  } else if (depthwise_separable && kernel != 1 && kernel != 3) {
    err << "depthwise-separable conv requires kernel 1 or 3, got " << kernel;
  } else if (kernel % 2 == 0 && stride != 2) {
    err << "even kernel " << kernel << " requires stride 2";
  } else if (in_channels <= 0 || out_channels <= 0) {
    err << "conv channels must be positive (in=" << in_channels << ", out=" << out_channels << ")";
  } else {
    return;
  }
  throw ArgumentError(err.str());
}

void require_rank4(const Tensor& x, std::string_view name) {
  if (!x.defined() || x.dim() != 4) {
    std::ostringstream err;
    err << "operand '" << name << "' must be a 4-D (N,C,H,W) tensor";
    if (x.defined()) err << ", got " << x.dim() << "-D " << x.sizes();
    throw ShapeError(err.str());
  }
}

void require_finite(const Tensor& x, std::string_view name) {
  if (!torch::isfinite(x).all().item<bool>()) {
    throw ValidationError("non-finite values in '" + std::string(name) + "'");
  }
}

Tensor conv2d(const Tensor& x, const ConvSpec& spec, const ConvWeights& weights) {
  spec.validate();
  require_rank4(x, "x");
  if (x.size(1) != spec.in_channels) {
    std::ostringstream err;
    err << "conv2d: operand 'x' has " << x.size(1) << " channels, spec expects " << spec.in_channels;
    throw ShapeError(err.str());
  }
  if (spec.stride == 2 && (x.size(2) % 2 != 0 || x.size(3) % 2 != 0)) {
    std::ostringstream err;
    err << "conv2d: stride-2 operand 'x' needs even spatial size, got " << x.size(2) << "x" << x.size(3);
    throw ShapeError(err.str());
  }
  const int pad = spec.padding();
  if (!spec.depthwise_separable) {
    return F::conv2d(x, weights.weight,
                     F::Conv2dFuncOptions().bias(weights.bias).stride(spec.stride).padding(pad));
  }
  auto depth = F::conv2d(x, weights.depthwise,
                         F::Conv2dFuncOptions().stride(spec.stride).padding(pad).groups(spec.in_channels));
  return F::conv2d(depth, weights.weight, F::Conv2dFuncOptions().bias(weights.bias));
}

Tensor bilinear_resize(const Tensor& x, int64_t target_h, int64_t target_w) {
  if (target_h < 1 || target_w < 1) {
    throw ArgumentError("bilinear_resize: target size must be positive, got " + std::to_string(target_h) +
                        "x" + std::to_string(target_w));
  }
  require_rank4(x, "x");
  if (x.size(2) == target_h && x.size(3) == target_w) return x;
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .size(std::vector<int64_t>{target_h, target_w})
                               .mode(torch::kBilinear)
                               .align_corners(false));
}

Tensor grid_warp(const Tensor& x, const Tensor& flow) {
  require_rank4(x, "x");
  require_rank4(flow, "flow");
  const auto h = x.size(2);
  const auto w = x.size(3);
  if (flow.size(1) != 2 || flow.size(2) != h || flow.size(3) != w || flow.size(0) != x.size(0)) {
    std::ostringstream err;
    err << "grid_warp: flow " << flow.sizes() << " does not match image " << x.sizes();
    throw ShapeError(err.str());
  }
  auto opts = flow.options().requires_grad(false);
  auto xs = torch::arange(w, opts).view({1, 1, w});
  auto ys = torch::arange(h, opts).view({1, h, 1});
  // align_corners=true maps -1/+1 onto the centres of the edge pixels, so
  // pixel coordinates convert with a single affine map per axis.
  auto to_norm = [](const Tensor& coord, int64_t extent) {
    if (extent == 1) return torch::zeros_like(coord);
    return coord * (2.0 / static_cast<double>(extent - 1)) - 1.0;
  };
  auto gx = to_norm(flow.select(1, 0) + xs, w);
  auto gy = to_norm(flow.select(1, 1) + ys, h);
  auto grid = torch::stack({gx, gy}, 3);
  return F::grid_sample(x, grid.to(x.scalar_type()),
                        F::GridSampleFuncOptions()
                            .mode(torch::kBilinear)
                            .padding_mode(torch::kBorder)
                            .align_corners(true));
}

ConvOpImpl::ConvOpImpl(const ConvSpec& spec) : spec_(spec) {
  spec_.validate();
  const auto k = spec_.kernel;
  // Kaiming-uniform bound with a=sqrt(5), matching torch::nn::Conv2d defaults.
  auto uniform = [](std::vector<int64_t> shape, double fan_in) {
    const double bound = 1.0 / std::sqrt(fan_in);
    return torch::empty(shape).uniform_(-bound, bound);
  };
  if (spec_.depthwise_separable) {
    weights_.depthwise = register_parameter("depthwise", uniform({spec_.in_channels, 1, k, k}, k * k));
    weights_.weight = register_parameter(
        "weight", uniform({spec_.out_channels, spec_.in_channels, 1, 1}, static_cast<double>(spec_.in_channels)));
    weights_.bias =
        register_parameter("bias", uniform({spec_.out_channels}, static_cast<double>(spec_.in_channels)));
  } else {
    const double fan_in = static_cast<double>(spec_.in_channels * k * k);
    weights_.weight = register_parameter("weight", uniform({spec_.out_channels, spec_.in_channels, k, k}, fan_in));
    weights_.bias = register_parameter("bias", uniform({spec_.out_channels}, fan_in));
  }
}

Tensor ConvOpImpl::forward(const Tensor& x) const { return conv2d(x, spec_, weights_); }

void ConvOpImpl::zero_output() {
  torch::NoGradGuard guard;
  weights_.weight.zero_();
  weights_.bias.zero_();
}

double GradCheckResult::max_relative_error() const {
  double worst = 0.0;
  for (double e : relative_errors) worst = std::max(worst, e);
  return worst;
}

GradCheckResult gradcheck(const DifferentiableFn& fn, const std::vector<Tensor>& inputs, double step,
                          uint64_t seed) {
  std::vector<Tensor> leaves;
  leaves.reserve(inputs.size());
  for (const auto& in : inputs) {
    leaves.push_back(in.detach().to(torch::kFloat64).clone().set_requires_grad(true));
  }

  Tensor projection;
  auto scalar_of = [&](const std::vector<Tensor>& args) {
    auto out = fn(args);
    if (out.numel() == 1) return out.reshape({});
    if (!projection.defined()) {
      auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
      projection = torch::randn(out.sizes(), gen, torch::TensorOptions().dtype(torch::kFloat64));
    }
    return (out * projection).sum();
  };

  auto value = scalar_of(leaves);
  auto analytic = torch::autograd::grad({value}, leaves, {}, false, false, true);

  GradCheckResult result;
  torch::NoGradGuard no_grad;
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    auto flat = leaves[i].view({-1});
    auto numeric = torch::zeros_like(flat);
    for (int64_t j = 0; j < flat.numel(); ++j) {
      const double orig = flat[j].item<double>();
      flat[j] = orig + step;
      const double plus = scalar_of(leaves).item<double>();
      flat[j] = orig - step;
      const double minus = scalar_of(leaves).item<double>();
      flat[j] = orig;
      numeric[j] = (plus - minus) / (2.0 * step);
    }
    auto a = analytic[i].defined() ? analytic[i].reshape({-1}) : torch::zeros_like(numeric);
    const double scale = std::max(numeric.abs().max().item<double>(), 1e-12);
    result.relative_errors.push_back((a - numeric).abs().max().item<double>() / scale);
  }
  return result;
}

}  // namespace warpnas
