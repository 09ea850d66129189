#pragma once

// Training loops for the three networks. Every loop uses Adam with
// betas (0.5, 0.999), samples a fresh path per step for the supernets (or
// trains one fixed path when a genome is given), checks that every loss is
// finite and can write a checkpoint plus a JSON sidecar after each epoch.

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "warpnas/fusion_supernet.hpp"
#include "warpnas/ppp.hpp"
#include "warpnas/synthdata.hpp"
#include "warpnas/warp_supernet.hpp"

namespace warpnas {

inline constexpr double kPppLearningRate = 0.002;
inline constexpr double kWarpLearningRate = 0.0002;
inline constexpr double kFusionLearningRate = 0.0001;
inline constexpr int kCheckpointSchemaVersion = 1;

struct TrainOptions {
  int epochs = 1;
  int batch_size = 8;
  double learning_rate = 0.0;  // 0 selects the stage default
  double beta1 = 0.5;
  double beta2 = 0.999;
  uint64_t seed = 0;
  /// Caps optimizer steps per epoch; 0 runs full epochs.
  int max_steps_per_epoch = 0;
  /// Empty disables checkpointing.
  std::filesystem::path checkpoint_dir;
  /// Scored after every epoch when non-empty.
  const Dataset* validation = nullptr;
  std::function<void(int epoch, int step, double loss)> on_step;
};

struct EpochSummary {
  int epoch = 0;
  double mean_loss = 0.0;
  /// Stage-specific validation score (see each train_* function); NaN when
  /// no validation set was given.
  double validation = 0.0;
  std::string last_genome;
  std::filesystem::path checkpoint;
};

struct TrainResult {
  std::vector<EpochSummary> epochs;
  std::vector<double> step_losses;
};

/// Random batch order per epoch, derived from (seed, epoch).
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t size, int batch_size, uint64_t seed, int epoch);

/// Validation score: mean L_mask over the split, averaged over
/// `kValidationGenomes` fixed-seed genomes (or the fixed genome).
TrainResult train_warp_supernet(WarpSupernet& net, const Dataset& train, const TrainOptions& options,
                                const FeatureExtractor& features, const WarpLossWeights& weights = {},
                                const std::optional<WarpGenome>& fixed_genome = std::nullopt);

/// Validation score: mean SSIM(I~, I), averaged like the warp stage.
TrainResult train_fusion_supernet(FusionSupernet& net, const Dataset& train, const TrainOptions& options,
                                  const FeatureExtractor& features,
                                  const std::optional<FusionGenome>& fixed_genome = std::nullopt);

/// Alternating generator / discriminator steps. Validation score: pixel
/// accuracy of the predicted partial parsing.
TrainResult train_ppp(PppGenerator& generator, PatchDiscriminator& discriminator, const Dataset& train,
                      const TrainOptions& options, const PppLossWeights& weights = {});

inline constexpr int kValidationGenomes = 4;

double validate_warp(const WarpSupernet& net, const Dataset& data, const std::vector<WarpGenome>& genomes,
                     int batch_size = 16);
double validate_fusion(const FusionSupernet& net, const Dataset& data, const std::vector<FusionGenome>& genomes,
                       int batch_size = 16);
double validate_ppp(const PppGenerator& generator, const Dataset& data, int batch_size = 16);

FusionInput fusion_input(const Batch& batch);
PppInput ppp_input(const Batch& batch);

/// Checkpoint sidecar written next to each weight blob.
struct CheckpointManifest {
  int schema_version = kCheckpointSchemaVersion;
  std::string stage;
  int epoch = 0;
  uint64_t seed = 0;
  Resolution resolution;
  std::string last_genome;
  std::vector<std::string> files;
};

void write_checkpoint_manifest(const std::filesystem::path& path, const CheckpointManifest& manifest);
CheckpointManifest read_checkpoint_manifest(const std::filesystem::path& path);

/// Saves / loads module weights; load throws MissingDependencyError naming
/// `stage` when the file is absent.
void save_module(const torch::nn::Module& module, const std::filesystem::path& path);
void load_module(torch::nn::Module& module, const std::filesystem::path& path, std::string_view stage);

}  // namespace warpnas
