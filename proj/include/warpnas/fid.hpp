#pragma once

// Frechet distance between Gaussian fits of two embedding sets. The
// embedding network is external: a TorchScript module mapping (N,3,H,W)
// images in [0,1] to (N,D) features.

#include <filesystem>
#include <memory>

#include "warpnas/numerics.hpp"

namespace warpnas {

/// ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2)) for (N,D) features.
double frechet_distance(const Tensor& features_a, const Tensor& features_b);

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual Tensor embed(const Tensor& images) const = 0;
};

/// Loads a TorchScript embedder. Throws MissingDependencyError with a
/// message explaining the hook when the path is empty or absent.
std::unique_ptr<Embedder> load_embedder(const std::filesystem::path& path);

}  // namespace warpnas
