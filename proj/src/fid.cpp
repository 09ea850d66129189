#include "warpnas/fid.hpp"

#include <torch/script.h>

#include "warpnas/errors.hpp"

namespace warpnas {

namespace {

class ScriptEmbedder final : public Embedder {
 public:
  explicit ScriptEmbedder(torch::jit::Module module) : module_(std::move(module)) { module_.eval(); }

  Tensor embed(const Tensor& images) const override {
    torch::NoGradGuard guard;
    auto out = const_cast<torch::jit::Module&>(module_).forward({images}).toTensor();
    return out.flatten(1);
  }

 private:
  torch::jit::Module module_;
};

}  // namespace

double frechet_distance(const Tensor& features_a, const Tensor& features_b) {
  if (features_a.dim() != 2 || features_b.dim() != 2 || features_a.size(1) != features_b.size(1)) {
    throw ShapeError("frechet_distance expects (N,D) feature matrices with equal D");
  }
  if (features_a.size(0) < 2 || features_b.size(0) < 2) {
    throw ArgumentError("frechet_distance needs at least two samples per set");
  }
  const auto a = features_a.to(torch::kFloat64);
  const auto b = features_b.to(torch::kFloat64);
  const auto mu_a = a.mean(0);
  const auto mu_b = b.mean(0);
  const int64_t d = a.size(1);
  const auto cov_a = torch::cov(a.t()).reshape({d, d});
  const auto cov_b = torch::cov(b.t()).reshape({d, d});
  // Tr((S_a S_b)^(1/2)) is the sum of square roots of the (real,
  // non-negative) eigenvalues of S_a S_b.
  const auto eig = torch::linalg_eigvals(torch::mm(cov_a, cov_b));
  const auto sqrt_trace = torch::real(eig).clamp_min(0).sqrt().sum();
  const auto mean_term = (mu_a - mu_b).pow(2).sum();
  return (mean_term + cov_a.trace() + cov_b.trace() - 2 * sqrt_trace).item<double>();
}

std::unique_ptr<Embedder> load_embedder(const std::filesystem::path& path) {
  if (path.empty() || !std::filesystem::exists(path)) {
    throw MissingDependencyError(
        "FID needs a pretrained embedding network; pass --fid-embedder <torchscript file> mapping (N,3,H,W) "
        "images to (N,D) features" +
        (path.empty() ? std::string() : " (not found: " + path.string() + ")"));
  }
  try {
    return std::make_unique<ScriptEmbedder>(torch::jit::load(path.string()));
  } catch (const c10::Error& e) {
    throw MissingDependencyError("cannot load FID embedder " + path.string() + ": " + e.what_without_backtrace());
  }
}

}  // namespace warpnas
