#include "warpnas/training.hpp"

#include <cmath>
#include <fstream>
#include <json.hpp>
#include <numeric>

#include "warpnas/errors.hpp"
#include "warpnas/metrics.hpp"

namespace warpnas {

using json = nlohmann::json;

namespace {

constexpr uint64_t kValidationGenomeSeed = 0x7a11dULL;

double finite_or_throw(const Tensor& loss, std::string_view stage, int epoch, int step) {
  const double v = loss.item<double>();
  if (!std::isfinite(v)) {
    throw ValidationError(std::string(stage) + ": non-finite loss at epoch " + std::to_string(epoch) + " step " +
                          std::to_string(step));
  }
  return v;
}

torch::optim::Adam make_adam(std::vector<Tensor> params, const TrainOptions& o, double default_lr) {
  const double lr = o.learning_rate > 0.0 ? o.learning_rate : default_lr;
  return torch::optim::Adam(std::move(params),
                            torch::optim::AdamOptions(lr).betas({o.beta1, o.beta2}));
}

void check_options(const Dataset& train, const TrainOptions& o, std::string_view stage) {
  if (train.empty()) throw ConfigError(std::string(stage) + ": training dataset is empty");
  if (o.epochs < 1 || o.batch_size < 1) throw ConfigError(std::string(stage) + ": epochs and batch size must be positive");
}

std::vector<WarpGenome> warp_validation_genomes(const std::optional<WarpGenome>& fixed) {
  if (fixed) return {*fixed};
  Rng rng(kValidationGenomeSeed);
  std::vector<WarpGenome> out;
  for (int i = 0; i < kValidationGenomes; ++i) out.push_back(sample_warp_genome(rng));
  return out;
}

std::vector<FusionGenome> fusion_validation_genomes(const std::optional<FusionGenome>& fixed, int levels) {
  if (fixed) return {*fixed};
  Rng rng(kValidationGenomeSeed);
  std::vector<FusionGenome> out;
  for (int i = 0; i < kValidationGenomes; ++i) out.push_back(sample_fusion_genome(rng, levels));
  return out;
}

template <class Eval>
double mean_over_batches(const Dataset& data, int batch_size, Eval&& eval) {
  torch::NoGradGuard guard;
  double total = 0.0;
  for (std::size_t b = 0; b < data.size(); b += static_cast<std::size_t>(batch_size)) {
    const auto batch = data.batch_range(b, b + static_cast<std::size_t>(batch_size));
    total += eval(batch) * static_cast<double>(batch.size());
  }
  return total / static_cast<double>(data.size());
}

std::filesystem::path epoch_stem(const std::filesystem::path& dir, int epoch) {
  return dir / ("epoch_" + std::to_string(epoch));
}

void finish_epoch(TrainResult& result, EpochSummary summary, const TrainOptions& o, std::string_view stage,
                  const Resolution& res, const std::vector<std::pair<std::string, const torch::nn::Module*>>& modules) {
  if (!o.checkpoint_dir.empty()) {
    std::filesystem::create_directories(o.checkpoint_dir);
    CheckpointManifest m;
    m.stage = stage;
    m.epoch = summary.epoch;
    m.seed = o.seed;
    m.resolution = res;
    m.last_genome = summary.last_genome;
    for (const auto& [name, module] : modules) {
      const auto file = epoch_stem(o.checkpoint_dir, summary.epoch).string() + "_" + name + ".pt";
      save_module(*module, file);
      m.files.push_back(std::filesystem::path(file).filename().string());
    }
    summary.checkpoint = epoch_stem(o.checkpoint_dir, summary.epoch).string() + ".json";
    write_checkpoint_manifest(summary.checkpoint, m);
  }
  result.epochs.push_back(std::move(summary));
}

}  // namespace

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t size, int batch_size, uint64_t seed, int epoch) {
  std::vector<std::size_t> order(size);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed * 0x9e3779b97f4a7c15ULL + static_cast<uint64_t>(epoch) + 1);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < size; i += static_cast<std::size_t>(batch_size)) {
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(size, i + batch_size)));
  }
  return batches;
}

FusionInput fusion_input(const Batch& batch) {
  return {batch.preserved, batch.warped_garment, batch.parsing, batch.pose};
}

PppInput ppp_input(const Batch& batch) { return {batch.body_shape, batch.pose, batch.head, batch.garment}; }

double validate_warp(const WarpSupernet& net, const Dataset& data, const std::vector<WarpGenome>& genomes,
                     int batch_size) {
  double total = 0.0;
  for (const auto& g : genomes) {
    total += mean_over_batches(data, batch_size, [&](const Batch& b) {
      const auto out = net->forward(g, b.garment_mask, b.target_mask, b.garment);
      return (out.warped_mask - b.target_mask).abs().mean().item<double>();
    });
  }
  return total / static_cast<double>(genomes.size());
}

double validate_fusion(const FusionSupernet& net, const Dataset& data, const std::vector<FusionGenome>& genomes,
                       int batch_size) {
  double total = 0.0;
  for (const auto& g : genomes) {
    total += mean_over_batches(data, batch_size, [&](const Batch& b) {
      const auto out = net->forward(g, fusion_input(b));
      return ssim_per_sample(out.final.clamp(0, 1), b.person).mean().item<double>();
    });
  }
  return total / static_cast<double>(genomes.size());
}

double validate_ppp(const PppGenerator& generator, const Dataset& data, int batch_size) {
  return mean_over_batches(data, batch_size, [&](const Batch& b) {
    return pixel_accuracy(generator->forward(ppp_input(b)), b.partial_labels);
  });
}

TrainResult train_warp_supernet(WarpSupernet& net, const Dataset& train, const TrainOptions& options,
                                const FeatureExtractor& features, const WarpLossWeights& weights,
                                const std::optional<WarpGenome>& fixed_genome) {
  check_options(train, options, "train-warp");
  if (fixed_genome) fixed_genome->validate();
  auto adam = make_adam(fixed_genome ? net->path_parameters(*fixed_genome) : net->parameters(), options,
                        kWarpLearningRate);
  Rng rng(options.seed);
  const auto val_genomes = warp_validation_genomes(fixed_genome);
  TrainResult result;
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    net->train();
    EpochSummary summary;
    summary.epoch = epoch;
    double sum = 0.0;
    int steps = 0;
    for (const auto& idx : epoch_batches(train.size(), options.batch_size, options.seed, epoch)) {
      if (options.max_steps_per_epoch > 0 && steps >= options.max_steps_per_epoch) break;
      const auto genome = fixed_genome ? *fixed_genome : sample_warp_genome(rng);
      const auto b = train.batch(idx);
      adam.zero_grad(true);
      const auto out = net->forward(genome, b.garment_mask, b.target_mask, b.garment);
      const auto loss = warping_loss(out, b.target_mask, b.warped_garment, features, weights);
      const double v = finite_or_throw(loss.total, "train-warp", epoch, steps);
      loss.total.backward();
      adam.step();
      sum += v;
      result.step_losses.push_back(v);
      if (options.on_step) options.on_step(epoch, steps, v);
      summary.last_genome = serialize(genome);
      ++steps;
    }
    summary.mean_loss = sum / std::max(steps, 1);
    net->eval();
    summary.validation = options.validation ? validate_warp(net, *options.validation, val_genomes)
                                            : std::numeric_limits<double>::quiet_NaN();
    finish_epoch(result, std::move(summary), options, "warp", train.resolution(), {{"warp", net.get()}});
  }
  return result;
}

TrainResult train_fusion_supernet(FusionSupernet& net, const Dataset& train, const TrainOptions& options,
                                  const FeatureExtractor& features, const std::optional<FusionGenome>& fixed_genome) {
  check_options(train, options, "train-fusion");
  if (fixed_genome) fixed_genome->validate();
  auto adam = make_adam(fixed_genome ? net->path_parameters(*fixed_genome) : net->parameters(), options,
                        kFusionLearningRate);
  Rng rng(options.seed);
  const auto layer_weights = default_layer_weights(features.layers());
  const auto val_genomes = fusion_validation_genomes(fixed_genome, net->levels());
  TrainResult result;
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    net->train();
    EpochSummary summary;
    summary.epoch = epoch;
    double sum = 0.0;
    int steps = 0;
    for (const auto& idx : epoch_batches(train.size(), options.batch_size, options.seed, epoch)) {
      if (options.max_steps_per_epoch > 0 && steps >= options.max_steps_per_epoch) break;
      const auto genome = fixed_genome ? *fixed_genome : sample_fusion_genome(rng, net->levels());
      const auto b = train.batch(idx);
      adam.zero_grad(true);
      const auto out = net->forward(genome, fusion_input(b));
      const auto loss = fusion_loss(out, b.person, b.target_mask, features, layer_weights);
      const double v = finite_or_throw(loss.total, "train-fusion", epoch, steps);
      loss.total.backward();
      adam.step();
      sum += v;
      result.step_losses.push_back(v);
      if (options.on_step) options.on_step(epoch, steps, v);
      summary.last_genome = serialize(genome);
      ++steps;
    }
    summary.mean_loss = sum / std::max(steps, 1);
    net->eval();
    summary.validation = options.validation ? validate_fusion(net, *options.validation, val_genomes)
                                            : std::numeric_limits<double>::quiet_NaN();
    finish_epoch(result, std::move(summary), options, "fusion", train.resolution(), {{"fusion", net.get()}});
  }
  return result;
}

TrainResult train_ppp(PppGenerator& generator, PatchDiscriminator& discriminator, const Dataset& train,
                      const TrainOptions& options, const PppLossWeights& weights) {
  check_options(train, options, "train-ppp");
  auto g_opt = make_adam(generator->parameters(), options, kPppLearningRate);
  auto d_opt = make_adam(discriminator->parameters(), options, kPppLearningRate);
  DiscriminatorFn disc = [&](const Tensor& c, const Tensor& p) { return discriminator->forward(c, p); };
  TrainResult result;
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    generator->train();
    discriminator->train();
    EpochSummary summary;
    summary.epoch = epoch;
    double sum = 0.0;
    int steps = 0;
    for (const auto& idx : epoch_batches(train.size(), options.batch_size, options.seed, epoch)) {
      if (options.max_steps_per_epoch > 0 && steps >= options.max_steps_per_epoch) break;
      const auto b = train.batch(idx);
      const auto input = ppp_input(b);
      const auto condition = input.condition();

      g_opt.zero_grad(true);
      d_opt.zero_grad(true);
      auto losses = ppp_losses(generator->forward(input), b.partial_labels, condition, disc, weights);
      const double g = finite_or_throw(losses.g_total, "train-ppp generator", epoch, steps);
      losses.g_total.backward();
      g_opt.step();

      d_opt.zero_grad(true);
      finite_or_throw(losses.d_total, "train-ppp discriminator", epoch, steps);
      losses.d_total.backward();
      d_opt.step();

      sum += losses.pixel.item<double>();
      result.step_losses.push_back(g);
      if (options.on_step) options.on_step(epoch, steps, g);
      ++steps;
    }
    // mean_loss tracks the pixel cross-entropy, the curve the stage is judged on.
    summary.mean_loss = sum / std::max(steps, 1);
    generator->eval();
    summary.validation = options.validation ? validate_ppp(generator, *options.validation)
                                            : std::numeric_limits<double>::quiet_NaN();
    finish_epoch(result, std::move(summary), options, "ppp", train.resolution(),
                 {{"generator", generator.get()}, {"discriminator", discriminator.get()}});
  }
  return result;
}

void write_checkpoint_manifest(const std::filesystem::path& path, const CheckpointManifest& m) {
  json j{{"schema_version", m.schema_version},
         {"stage", m.stage},
         {"epoch", m.epoch},
         {"seed", m.seed},
         {"resolution", m.resolution.str()},
         {"last_genome", m.last_genome},
         {"files", m.files}};
  std::ofstream out(path);
  if (!out) throw IoError("cannot write checkpoint manifest " + path.string());
  out << j.dump(2) << '\n';
}

CheckpointManifest read_checkpoint_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingDependencyError("checkpoint manifest not found: " + path.string());
  try {
    const auto j = json::parse(in);
    CheckpointManifest m;
    m.schema_version = j.at("schema_version");
    m.stage = j.at("stage");
    m.epoch = j.at("epoch");
    m.seed = j.at("seed");
    m.resolution = Resolution::parse(j.at("resolution").get<std::string>());
    m.last_genome = j.at("last_genome");
    m.files = j.at("files").get<std::vector<std::string>>();
    if (m.schema_version != kCheckpointSchemaVersion) {
      throw ValidationError("unsupported checkpoint schema " + std::to_string(m.schema_version));
    }
    return m;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed checkpoint manifest: ") + e.what(), 0);
  }
}

void save_module(const torch::nn::Module& module, const std::filesystem::path& path) {
  torch::serialize::OutputArchive archive;
  module.save(archive);
  archive.save_to(path.string());
}

void load_module(torch::nn::Module& module, const std::filesystem::path& path, std::string_view stage) {
  if (!std::filesystem::exists(path)) {
    throw MissingDependencyError("missing " + std::string(stage) + " checkpoint " + path.string() + "; run `" +
                                 std::string(stage) + "` first");
  }
  try {
    torch::serialize::InputArchive archive;
    archive.load_from(path.string());
    module.load(archive);
  } catch (const c10::Error& e) {
    throw IoError("cannot read " + std::string(stage) + " checkpoint " + path.string() + ": " + e.what_without_backtrace());
  }
}

}  // namespace warpnas
