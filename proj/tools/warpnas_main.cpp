// warpnas: command-line driver for data generation, supernet training,
// architecture search, fine-tuning, evaluation and try-on.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <json.hpp>
#include <map>
#include <set>
#include <sstream>

#include "cli_support.hpp"
#include "warpnas/errors.hpp"
#include "warpnas/fid.hpp"
#include "warpnas/fitness.hpp"

using namespace warpnas;
using namespace warpnas::cli;
using json = nlohmann::json;

namespace {

struct Common {
  std::string config_file;
  std::vector<std::string> sets;
  std::string runs_root = "runs";
  std::string run_id;
  std::string dataset;
  std::string resolution;
  int64_t seed = -1;
  std::vector<std::string> argv;

  void add_to(CLI::App* app, bool needs_run = true) {
    app->add_option("--config", config_file, "JSON experiment config");
    app->add_option("--set", sets, "Override a config value, e.g. --set warp.epochs=5");
    app->add_option("--runs-root", runs_root, "Directory holding run directories");
    auto* id = app->add_option("--run-id", run_id, "Identifier of the new run directory");
    if (needs_run) id->required();
    app->add_option("--dataset", dataset, "Dataset directory");
    app->add_option("--resolution", resolution, "Image size HxW");
    app->add_option("--seed", seed, "Random seed");
  }

  /// Config file, then --set overrides, then dedicated flags (flags win).
  std::pair<ExperimentConfig, std::vector<std::string>> resolve() const {
    ExperimentConfig cfg = config_file.empty() ? ExperimentConfig{} : load_config(config_file);
    std::vector<std::string> applied = sets;
    if (!dataset.empty()) applied.push_back("dataset=\"" + dataset + "\"");
    if (!resolution.empty()) applied.push_back("resolution=\"" + resolution + "\"");
    if (seed >= 0) applied.push_back("seed=" + std::to_string(seed));
    cfg = apply_overrides(cfg, applied);
    cfg.validate();
    return {cfg, applied};
  }
};

struct Deps {
  std::string ppp_run, warp_run, fusion_run;
  std::vector<std::string> search_runs;
  std::string fusion_genome;
};

void log_line(const std::string& s) { std::cerr << s << std::endl; }

WarpSupernetConfig warp_config(const ExperimentConfig& cfg) {
  WarpSupernetConfig w;
  w.height = cfg.resolution.height;
  w.width = cfg.resolution.width;
  return w;
}

FusionSupernetConfig fusion_config(const ExperimentConfig& cfg) {
  FusionSupernetConfig f;
  f.height = cfg.resolution.height;
  f.width = cfg.resolution.width;
  if (cfg.fusion.base_width > 0) f.base_width = cfg.fusion.base_width;
  return f;
}

PppConfig ppp_config(const ExperimentConfig& cfg) {
  PppConfig p;
  if (cfg.ppp.base_width > 0) p.base_width = cfg.ppp.base_width;
  return p;
}

WarpLossWeights warp_weights(const ExperimentConfig& cfg) {
  WarpLossWeights w;
  w.perceptual = cfg.lambda_perc;
  w.tv = cfg.lambda_tv;
  w.tv_reduction = cfg.tv_reduction == "sum" ? TvReduction::kSum : TvReduction::kMean;
  return w;
}

TrainOptions stage_options(const ExperimentConfig& cfg, const StageConfig& stage, const RunDir& run,
                           const Dataset* validation) {
  TrainOptions o;
  o.epochs = stage.epochs;
  o.batch_size = stage.batch_size;
  o.learning_rate = stage.lr;
  o.beta1 = cfg.beta1;
  o.beta2 = cfg.beta2;
  o.seed = cfg.seed;
  o.checkpoint_dir = run.checkpoints();
  o.validation = validation;
  o.on_step = [](int epoch, int step, double loss) {
    if (step % 50 == 0) log_line("  epoch " + std::to_string(epoch) + " step " + std::to_string(step) +
                                 " loss " + std::to_string(loss));
  };
  return o;
}

void check_resolution(const ExperimentConfig& cfg, const Dataset& d, std::string_view what) {
  if (d.resolution().height != cfg.resolution.height || d.resolution().width != cfg.resolution.width) {
    throw ConfigError(std::string(what) + " is " + d.resolution().str() + " but the config asks for " +
                      cfg.resolution.str());
  }
}

Dataset load_checked(const ExperimentConfig& cfg, std::string_view split) {
  auto d = load_split(cfg.dataset, split);
  check_resolution(cfg, d, "dataset split '" + std::string(split) + "'");
  return d;
}

void report_epochs(const RunDir& run, const std::string& stage, const TrainResult& result, const std::string& metric) {
  run.write_curve(stage + "_curve.tsv", result.epochs);
  std::vector<std::pair<std::string, double>> rows;
  for (const auto& e : result.epochs) {
    rows.push_back({stage + "_train_loss_epoch" + std::to_string(e.epoch), e.mean_loss});
    rows.push_back({metric + "_epoch" + std::to_string(e.epoch), e.validation});
  }
  run.add_metrics("val", rows);
}

WarpSupernet load_warp(const RunDir& run, const ExperimentConfig& cfg) {
  const auto ckpt = latest_checkpoint(run, "warp", "train-warp");
  WarpSupernet net(warp_config(cfg));
  load_module(*net, ckpt.file("warp"), "train-warp");
  net->eval();
  return net;
}

FusionSupernet load_fusion(const RunDir& run, const ExperimentConfig& cfg) {
  const auto ckpt = latest_checkpoint(run, "fusion", "train-fusion");
  FusionSupernet net(fusion_config(cfg));
  load_module(*net, ckpt.file("fusion"), "train-fusion");
  net->eval();
  return net;
}

PppGenerator load_ppp(const RunDir& run, const ExperimentConfig& cfg) {
  const auto ckpt = latest_checkpoint(run, "ppp", "train-ppp");
  PppGenerator g(ppp_config(cfg));
  load_module(*g, ckpt.file("generator"), "train-ppp");
  g->eval();
  return g;
}

std::string read_text_file(const fs::path& p, std::string_view what) {
  std::ifstream in(p);
  if (!in) throw MissingDependencyError(std::string(what) + " not found: " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  auto s = ss.str();
  while (!s.empty() && (s.back() == '\n' || s.back() == ' ')) s.pop_back();
  return s;
}

/// Best genome per category from a list of search-warp runs.
std::map<Category, WarpGenome> searched_genomes(const ExperimentConfig& cfg, const Common& c,
                                                const std::vector<std::string>& runs, std::string_view needed_by) {
  (void)cfg;
  std::map<Category, WarpGenome> out;
  for (const auto& id : runs) {
    const auto run = RunDir::open(c.runs_root, id, needed_by);
    const auto meta = json::parse(read_text_file(run.path() / "best_genome.json", "search result"));
    out[parse_category(meta.at("category").get<std::string>())] =
        parse_warp_genome(meta.at("genome").get<std::string>());
  }
  return out;
}

// ---------------------------------------------------------------- commands

int cmd_gen_data(const Common& c, const std::vector<std::string>& argv) {
  auto [cfg, applied] = c.resolve();
  const fs::path root = cfg.dataset;
  if (fs::exists(root / "manifest.json")) {
    throw ArgumentError("dataset " + root.string() + " already exists; datasets are never overwritten");
  }
  const auto run = RunDir::create(c.runs_root, c.run_id, "gen-data", cfg, applied, argv);
  log_line("generating " + cfg.resolution.str() + " dataset in " + root.string());
  const auto splits = generate_splits(cfg.layout, cfg.resolution, cfg.seed);
  save_splits(root, splits, cfg.seed);
  std::vector<std::pair<std::string, double>> rows;
  const std::array<std::pair<const char*, const Dataset*>, 3> named{
      {{"train", &splits.train}, {"val", &splits.val}, {"test", &splits.test}}};
  for (const auto& [name, d] : named) {
    const auto counts = d->count_by_category();
    for (auto cat : kAllCategories) {
      rows.push_back({std::string(name) + "_count_" + std::string(category_name(cat)),
                      static_cast<double>(counts[static_cast<std::size_t>(cat)])});
    }
  }
  run.add_metrics("all", rows);
  // gt-flow TV per category orders the deformation families by complexity
  std::vector<std::pair<std::string, double>> tv_rows;
  for (auto cat : kAllCategories) {
    const auto sub = splits.train.filter(cat);
    double tv = 0.0;
    for (const auto& s : sub.scenes()) tv += tv_loss(FlowField(s.flow.unsqueeze(0))).item<double>();
    tv_rows.push_back({"gt_flow_tv_" + std::string(category_name(cat)), tv / static_cast<double>(sub.size())});
  }
  run.add_metrics("train", tv_rows);
  std::cout << "dataset written to " << root.string() << '\n';
  return 0;
}

int cmd_train_warp(const Common& c, const std::vector<std::string>& argv) {
  auto [cfg, applied] = c.resolve();
  const auto run = RunDir::create(c.runs_root, c.run_id, "train-warp", cfg, applied, argv);
  const auto train = load_checked(cfg, "train");
  const auto val = load_checked(cfg, "val");
  torch::manual_seed(cfg.seed);
  WarpSupernet net(warp_config(cfg));
  RandomConvFeatures features;
  const auto result =
      train_warp_supernet(net, train, stage_options(cfg, cfg.warp, run, &val), features, warp_weights(cfg));
  report_epochs(run, "warp", result, "val_mask_l1");
  std::cout << "warp supernet trained; checkpoints in " << run.checkpoints().string() << '\n';
  return 0;
}

int cmd_train_fusion(const Common& c, const std::vector<std::string>& argv) {
  auto [cfg, applied] = c.resolve();
  const auto run = RunDir::create(c.runs_root, c.run_id, "train-fusion", cfg, applied, argv);
  const auto train = load_checked(cfg, "train");
  const auto val = load_checked(cfg, "val");
  torch::manual_seed(cfg.seed);
  FusionSupernet net(fusion_config(cfg));
  RandomConvFeatures features;
  const auto result = train_fusion_supernet(net, train, stage_options(cfg, cfg.fusion, run, &val), features);
  report_epochs(run, "fusion", result, "val_tryon_ssim");
  std::cout << "fusion supernet (" << net->levels() << " levels) trained; checkpoints in "
            << run.checkpoints().string() << '\n';
  return 0;
}

int cmd_train_ppp(const Common& c, const std::vector<std::string>& argv) {
  auto [cfg, applied] = c.resolve();
  const auto run = RunDir::create(c.runs_root, c.run_id, "train-ppp", cfg, applied, argv);
  const auto train = load_checked(cfg, "train");
  const auto val = load_checked(cfg, "val");
  torch::manual_seed(cfg.seed);
  PppGenerator generator(ppp_config(cfg));
  PatchDiscriminator discriminator(25, kPartialClasses);
  PppLossWeights w;
  w.adversarial = cfg.lambda_adv;
  const auto result = train_ppp(generator, discriminator, train, stage_options(cfg, cfg.ppp, run, &val), w);
  report_epochs(run, "ppp", result, "val_pixel_accuracy");
  std::cout << "PPP trained; checkpoints in " << run.checkpoints().string() << '\n';
  return 0;
}

int cmd_search_warp(const Common& c, const Deps& deps, const std::string& category_name_arg,
                    const std::vector<std::string>& argv) {
  const auto category = parse_category(category_name_arg);
  auto [cfg, applied] = c.resolve();
  const auto warp_run = RunDir::open(c.runs_root, deps.warp_run, "search-warp");
  const auto net = load_warp(warp_run, cfg);
  const auto ckpt = latest_checkpoint(warp_run, "warp", "train-warp");
  const auto run = RunDir::create(c.runs_root, c.run_id, "search-warp", cfg, applied, argv);
  const auto val = load_checked(cfg, "val").filter(category);
  if (val.empty()) throw ConfigError("validation split has no " + category_name_arg + " samples");

  auto search = cfg.search;
  search.category = category;
  log_line("searching warp genome for " + category_name_arg + " on " + std::to_string(val.size()) +
           " validation samples");
  auto record = evolve_warp(
      search, [&](const WarpGenome& g) { return fitness_warp(g, net, val, category); },
      cfg.seed + static_cast<uint64_t>(category));
  record.checkpoint_id = deps.warp_run + "/epoch_" + std::to_string(ckpt.manifest.epoch);
  write_search_record(run.path() / "search_record.jsonl", record);

  const auto& best = record.best();
  const auto baseline = WarpGenome::uniform(1, WarpOp::kConv3x3);
  const double baseline_fitness = fitness_warp(baseline, net, val, category);
  run.write_text("best_genome.txt", best.genome + "\n");
  run.write_text("best_genome.json", json{{"category", category_name_arg},
                                          {"genome", best.genome},
                                          {"fitness", best.fitness},
                                          {"baseline_genome", serialize(baseline)},
                                          {"baseline_fitness", baseline_fitness},
                                          {"checkpoint", record.checkpoint_id}}
                                         .dump(2) + "\n");
  run.add_metrics("val", {{"search_best_warp_ssim_" + category_name_arg, best.fitness},
                          {"baseline_warp_ssim_" + category_name_arg, baseline_fitness},
                          {"search_evaluations", static_cast<double>(record.evaluations)}});
  plot_series(run.images() / "fitness_curve.png", "best warp SSIM per generation (" + category_name_arg + ")",
              "generation", {{"best so far", record.best_trajectory()}});
  std::cout << category_name_arg << ": " << best.genome << "  fitness " << best.fitness << "  (baseline "
            << baseline_fitness << ")\n";
  return 0;
}

int cmd_search_fusion(const Common& c, const Deps& deps, const std::vector<std::string>& argv) {
  auto [cfg, applied] = c.resolve();
  const auto fusion_run = RunDir::open(c.runs_root, deps.fusion_run, "search-fusion");
  const auto net = load_fusion(fusion_run, cfg);
  const auto ckpt = latest_checkpoint(fusion_run, "fusion", "train-fusion");
  const auto run = RunDir::create(c.runs_root, c.run_id, "search-fusion", cfg, applied, argv);
  const auto val = load_checked(cfg, "val");
  auto record = evolve_fusion(
      cfg.search, net->levels(), [&](const FusionGenome& g) { return fitness_fusion(g, net, val); }, cfg.seed);
  record.checkpoint_id = deps.fusion_run + "/epoch_" + std::to_string(ckpt.manifest.epoch);
  write_search_record(run.path() / "search_record.jsonl", record);
  const auto& best = record.best();
  const auto unet = FusionGenome::unet(net->levels());
  const double unet_fitness = fitness_fusion(unet, net, val);
  run.write_text("best_genome.txt", best.genome + "\n");
  run.write_text("best_genome.json", json{{"genome", best.genome},
                                          {"fitness", best.fitness},
                                          {"baseline_genome", serialize(unet)},
                                          {"baseline_fitness", unet_fitness},
                                          {"checkpoint", record.checkpoint_id}}
                                         .dump(2) + "\n");
  run.add_metrics("val", {{"search_best_tryon_ssim", best.fitness}, {"baseline_tryon_ssim", unet_fitness}});
  plot_series(run.images() / "fitness_curve.png", "best try-on SSIM per generation", "generation",
              {{"best so far", record.best_trajectory()}});
  std::cout << "fusion: " << best.genome << "  fitness " << best.fitness << "  (U-Net " << unet_fitness << ")\n";
  return 0;
}

int cmd_finetune(const Common& c, const Deps& deps, const std::string& genome_file, const std::string& category_arg,
                 const std::vector<std::string>& argv) {
  auto [cfg, applied] = c.resolve();
  const auto genome = parse_genome(read_text_file(genome_file, "genome file"));
  const bool is_warp = std::holds_alternative<WarpGenome>(genome);
  if (is_warp && category_arg.empty()) throw ArgumentError("finetune of a warp genome needs --category");
  const auto source = RunDir::open(c.runs_root, is_warp ? deps.warp_run : deps.fusion_run, "finetune");
  const auto run = RunDir::create(c.runs_root, c.run_id, "finetune", cfg, applied, argv);
  run.write_text("genome.txt", serialize(genome) + "\n");
  auto train = load_checked(cfg, "train");
  auto test = load_checked(cfg, "test");
  torch::manual_seed(cfg.seed);
  RandomConvFeatures features;
  auto opts = stage_options(cfg, cfg.finetune, run, nullptr);
  if (is_warp) {
    const auto category = parse_category(category_arg);
    const auto& g = std::get<WarpGenome>(genome);
    train = train.filter(category);
    test = test.filter(category);
    auto net = load_warp(source, cfg);
    const double pre = fitness_warp(g, net, test, category);
    if (opts.learning_rate <= 0) opts.learning_rate = cfg.warp.lr;
    const auto result = train_warp_supernet(net, train, opts, features, warp_weights(cfg), g);
    net->eval();
    const double post = fitness_warp(g, net, test, category);
    run.write_curve("finetune_curve.tsv", result.epochs);
    run.add_metrics("test", {{"warp_ssim_pre_finetune_" + category_arg, pre},
                             {"warp_ssim_post_finetune_" + category_arg, post}});
    std::cout << category_arg << " warp SSIM on test: " << pre << " -> " << post << '\n';
  } else {
    const auto& g = std::get<FusionGenome>(genome);
    auto net = load_fusion(source, cfg);
    const double pre = fitness_fusion(g, net, test);
    if (opts.learning_rate <= 0) opts.learning_rate = cfg.fusion.lr;
    const auto result = train_fusion_supernet(net, train, opts, features, g);
    net->eval();
    const double post = fitness_fusion(g, net, test);
    run.write_curve("finetune_curve.tsv", result.epochs);
    run.add_metrics("test", {{"tryon_ssim_pre_finetune", pre}, {"tryon_ssim_post_finetune", post}});
    std::cout << "try-on SSIM on test: " << pre << " -> " << post << '\n';
  }
  return 0;
}

int cmd_eval(const Common& c, const Deps& deps, const std::string& split_name, const std::string& fid_embedder,
             bool fid_requested, const std::vector<std::string>& argv) {
  if (split_name != "test") throw ArgumentError("eval only reports on the test split");
  auto [cfg, applied] = c.resolve();
  std::unique_ptr<Embedder> embedder;
  if (fid_requested) embedder = load_embedder(fid_embedder);
  const auto warp_run = RunDir::open(c.runs_root, deps.warp_run, "eval");
  const auto fusion_run = RunDir::open(c.runs_root, deps.fusion_run, "eval");
  const auto genomes = searched_genomes(cfg, c, deps.search_runs, "eval");
  const auto warp = load_warp(warp_run, cfg);
  const auto fusion = load_fusion(fusion_run, cfg);
  const auto fusion_genome = deps.fusion_genome.empty()
                                 ? FusionGenome::unet(fusion->levels())
                                 : parse_fusion_genome(read_text_file(deps.fusion_genome, "fusion genome"));
  const auto run = RunDir::create(c.runs_root, c.run_id, "eval", cfg, applied, argv);

  // The test split is read on its own and checked against the manifest's
  // validation ids so evaluation never sees validation data.
  const auto test = load_checked(cfg, "test");
  const auto val_ids = manifest_ids(cfg.dataset, "val");
  const std::set<std::string> val_set(val_ids.begin(), val_ids.end());
  for (const auto& id : test.ids()) {
    if (val_set.contains(id)) throw ValidationError("test sample " + id + " also appears in the validation split");
  }

  torch::NoGradGuard guard;
  std::vector<std::pair<std::string, double>> rows;
  double tryon_total = 0.0;
  std::size_t tryon_count = 0;
  std::vector<Tensor> real_images, fake_images;
  for (auto cat : kAllCategories) {
    const auto sub = test.filter(cat);
    if (sub.empty()) continue;
    const auto it = genomes.find(cat);
    const auto genome = it != genomes.end() ? it->second : WarpGenome::uniform(1, WarpOp::kConv3x3);
    const auto name = std::string(category_name(cat));
    if (it == genomes.end()) log_line("no search run for " + name + "; using the all-(1 block, 3x3) genome");
    double warp_sum = 0.0, tryon_sum = 0.0;
    for (std::size_t b = 0; b < sub.size(); b += 16) {
      const auto batch = sub.batch_range(b, b + 16);
      const auto w = warp->forward(genome, batch.garment_mask, batch.target_mask, batch.garment);
      warp_sum += ssim_per_sample(w.warped_garment, batch.warped_garment).sum().item<double>();
      auto input = fusion_input(batch);
      input.warped_garment = w.warped_garment;
      const auto out = fusion->forward(fusion_genome, input);
      const auto final_image = out.final.clamp(0, 1);
      tryon_sum += ssim_per_sample(final_image, batch.person).sum().item<double>();
      if (embedder) {
        real_images.push_back(batch.person);
        fake_images.push_back(final_image);
      }
    }
    rows.push_back({"warp_ssim_" + name, warp_sum / double(sub.size())});
    rows.push_back({"tryon_ssim_" + name, tryon_sum / double(sub.size())});
    tryon_total += tryon_sum;
    tryon_count += sub.size();
    rows.push_back({"genome_blocks_" + name, double(genome.total_blocks())});
  }
  rows.push_back({"tryon_ssim", tryon_total / double(std::max<std::size_t>(tryon_count, 1))});
  if (embedder) {
    rows.push_back({"tryon_fid", frechet_distance(embedder->embed(torch::cat(real_images)),
                                                  embedder->embed(torch::cat(fake_images)))});
  }
  run.add_metrics("test", rows);
  for (const auto& [metric, value] : rows) std::cout << metric << '\t' << value << '\n';
  return 0;
}

int cmd_tryon(const Common& c, const Deps& deps, const std::string& person_id, const std::string& garment_id,
              const std::string& split_name, const std::vector<std::string>& argv) {
  auto [cfg, applied] = c.resolve();
  const auto ppp = load_ppp(RunDir::open(c.runs_root, deps.ppp_run, "tryon"), cfg);
  const auto warp = load_warp(RunDir::open(c.runs_root, deps.warp_run, "tryon"), cfg);
  const auto fusion = load_fusion(RunDir::open(c.runs_root, deps.fusion_run, "tryon"), cfg);
  const auto genomes = searched_genomes(cfg, c, deps.search_runs, "tryon");
  const auto fusion_genome = deps.fusion_genome.empty()
                                 ? FusionGenome::unet(fusion->levels())
                                 : parse_fusion_genome(read_text_file(deps.fusion_genome, "fusion genome"));
  const auto data = load_checked(cfg, split_name);
  const auto find = [&](const std::string& id) {
    const auto ids = data.ids();
    const auto it = std::find(ids.begin(), ids.end(), id);
    if (it == ids.end()) throw ArgumentError("sample '" + id + "' is not in the " + split_name + " split");
    return static_cast<std::size_t>(it - ids.begin());
  };
  const std::array<std::size_t, 1> pi{find(person_id)};
  const std::array<std::size_t, 1> gi{find(garment_id)};
  const auto person = data.batch(pi);
  const auto garment = data.batch(gi);
  const auto category = garment.categories[0];
  if (is_upper_body(category) != is_upper_body(person.categories[0])) {
    throw ArgumentError("person " + person_id + " and garment " + garment_id + " dress different body parts");
  }
  const auto run = RunDir::create(c.runs_root, c.run_id, "tryon", cfg, applied, argv);
  torch::NoGradGuard guard;

  // 1. partial parsing of the regions the new garment changes
  PppInput pin{person.body_shape, person.pose, person.head, garment.garment};
  const auto partial = ppp->forward(pin).argmax(1);
  const bool upper = is_upper_body(category);
  const auto garment_class = upper ? kPartialUpper : kPartialLower;
  const auto target_mask = partial.eq(garment_class).unsqueeze(1).to(torch::kFloat32);

  // 2. category-specific warp onto the predicted region
  const auto it = genomes.find(category);
  const auto genome = it != genomes.end() ? it->second : WarpGenome::uniform(1, WarpOp::kConv3x3);
  const auto warped = warp->forward(genome, garment.garment_mask, target_mask, garment.garment);

  // 3. parsing: predicted changed regions take precedence over the
  // preserved person's own labels
  auto labels = person.parsing_labels.clone();
  const std::array<int64_t, kPartialClasses> to_full{
      -1, kUpperGarment, kLowerGarment, upper ? kArms : kLegs, upper ? kNeck : kShoes};
  for (int k = 1; k < kPartialClasses; ++k) labels.masked_fill_(partial.eq(k), to_full[k]);
  const auto parsing = torch::one_hot(labels, kParsingClasses).permute({0, 3, 1, 2}).to(torch::kFloat32);
  const auto out = fusion->forward(fusion_genome, {person.preserved, warped.warped_garment, parsing, person.pose});

  const auto dir = run.images();
  write_image(dir / "warped_garment.png", warped.warped_garment);
  write_image(dir / "fusion_mask.png", out.fusion_mask);
  write_image(dir / "coarse.png", out.coarse.clamp(0, 1));
  write_image(dir / "final.png", out.final.clamp(0, 1));
  write_image(dir / "person.png", person.person);
  write_image(dir / "garment.png", garment.garment);
  write_image(dir / "partial_parsing.png", partial.unsqueeze(1).to(torch::kFloat32) / (kPartialClasses - 1));
  run.add_metrics(split_name, {{"tryon_warp_genome_blocks", double(genome.total_blocks())}});
  std::cout << "try-on images written to " << dir.string() << '\n';
  return 0;
}

int cmd_report(const Common& c, const std::vector<std::string>& run_ids, const std::string& out_dir) {
  std::vector<std::string> ids = run_ids;
  if (ids.empty() && fs::exists(c.runs_root)) {
    for (const auto& e : fs::directory_iterator(c.runs_root)) {
      if (fs::exists(e.path() / "run.json")) ids.push_back(e.path().filename().string());
    }
    std::sort(ids.begin(), ids.end());
  }
  const fs::path out = out_dir.empty() ? fs::path(c.runs_root) / "report" : fs::path(out_dir);
  fs::create_directories(out);
  std::ostringstream table;
  table << "| run | split | metric | value |\n|---|---|---|---|\n";
  std::size_t plots = 0;
  for (const auto& id : ids) {
    const auto run = RunDir::open(c.runs_root, id, "report");
    if (fs::exists(run.metrics())) {
      for (const auto& r : read_metric_rows(run.metrics())) {
        table << "| " << r.run_id << " | " << r.split << " | " << r.metric << " | " << r.value << " |\n";
      }
    }
    for (const auto& e : fs::directory_iterator(run.path())) {
      const auto name = e.path().filename().string();
      if (name.ends_with("_curve.tsv")) {
        const auto rows = read_curve(e.path());
        Series loss{"train loss", {}}, val{"validation", {}};
        for (const auto& r : rows) {
          loss.values.push_back(r.at(1));
          val.values.push_back(r.at(2));
        }
        const auto stem = id + "_" + name.substr(0, name.size() - 4);
        plot_series(out / (stem + "_loss.png"), id + ": " + stem + " train loss", "epoch", {loss});
        plot_series(out / (stem + "_val.png"), id + ": " + stem + " validation", "epoch", {val});
        plots += 2;
      }
    }
    if (fs::exists(run.path() / "search_record.jsonl")) {
      const auto record = read_search_record(run.path() / "search_record.jsonl");
      Series best{"best so far", record.best_trajectory()}, mean{"generation mean", {}};
      for (const auto& g : record.generations) {
        double s = 0.0;
        for (const auto& cand : g.candidates) s += cand.fitness;
        mean.values.push_back(s / double(std::max<std::size_t>(g.candidates.size(), 1)));
      }
      plot_series(out / (id + "_fitness.png"), id + ": search fitness", "generation", {best, mean});
      ++plots;
    }
  }
  {
    std::ofstream f(out / "metrics.md");
    f << table.str();
  }
  std::cout << table.str() << "\n" << plots << " plots written to " << out.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Warping-architecture search for virtual try-on on synthetic garments"};
  app.require_subcommand(1);
  const std::vector<std::string> args(argv, argv + argc);

  Common common;
  Deps deps;
  std::string category, genome_file, split = "test", person, garment, fid_embedder, report_out;
  std::vector<std::string> report_runs;

  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic dataset");
  common.add_to(gen);
  auto* tppp = app.add_subcommand("train-ppp", "Train the partial parsing network");
  common.add_to(tppp);
  auto* twarp = app.add_subcommand("train-warp", "Train the warping supernet");
  common.add_to(twarp);
  auto* tfusion = app.add_subcommand("train-fusion", "Train the fusion supernet");
  common.add_to(tfusion);

  auto* swarp = app.add_subcommand("search-warp", "Evolutionary search of a category-specific warping genome");
  common.add_to(swarp);
  swarp->add_option("--category", category, "Garment category")->required();
  swarp->add_option("--warp-run", deps.warp_run, "train-warp run to search")->required();

  auto* sfusion = app.add_subcommand("search-fusion", "Evolutionary search of the fusion genome");
  common.add_to(sfusion);
  sfusion->add_option("--fusion-run", deps.fusion_run, "train-fusion run to search")->required();

  auto* ft = app.add_subcommand("finetune", "Fine-tune one searched genome on its inherited weights");
  common.add_to(ft);
  ft->add_option("--genome", genome_file, "File holding the genome text")->required();
  ft->add_option("--category", category, "Category of a warp genome");
  ft->add_option("--warp-run", deps.warp_run, "Source train-warp run");
  ft->add_option("--fusion-run", deps.fusion_run, "Source train-fusion run");

  auto* ev = app.add_subcommand("eval", "Per-category warp SSIM and overall try-on SSIM on the test split");
  common.add_to(ev);
  ev->add_option("--split", split, "Split to evaluate (test only)");
  ev->add_option("--warp-run", deps.warp_run, "train-warp run")->required();
  ev->add_option("--fusion-run", deps.fusion_run, "train-fusion run")->required();
  ev->add_option("--search-runs", deps.search_runs, "search-warp runs providing per-category genomes");
  ev->add_option("--fusion-genome", deps.fusion_genome, "Fusion genome file (default: U-Net genome)");
  auto* fid = ev->add_option("--fid-embedder", fid_embedder, "TorchScript embedder enabling FID");

  auto* tr = app.add_subcommand("tryon", "End-to-end try-on of one garment onto one person");
  common.add_to(tr);
  tr->add_option("--person", person, "Person sample id")->required();
  tr->add_option("--garment", garment, "Garment sample id")->required();
  tr->add_option("--split", split, "Split holding both samples");
  tr->add_option("--ppp-run", deps.ppp_run, "train-ppp run")->required();
  tr->add_option("--warp-run", deps.warp_run, "train-warp run")->required();
  tr->add_option("--fusion-run", deps.fusion_run, "train-fusion run")->required();
  tr->add_option("--search-runs", deps.search_runs, "search-warp runs providing per-category genomes");
  tr->add_option("--fusion-genome", deps.fusion_genome, "Fusion genome file (default: U-Net genome)");

  auto* rep = app.add_subcommand("report", "Metric tables and loss / fitness plots");
  common.add_to(rep, false);
  rep->add_option("--runs", report_runs, "Runs to include (default: all)");
  rep->add_option("--out", report_out, "Output directory (default: <runs-root>/report)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error[" << error_kind_name(ErrorKind::kArgument) << "]: " << e.what() << '\n';
    return static_cast<int>(ErrorKind::kArgument);
  }

  try {
    if (gen->parsed()) return cmd_gen_data(common, args);
    if (tppp->parsed()) return cmd_train_ppp(common, args);
    if (twarp->parsed()) return cmd_train_warp(common, args);
    if (tfusion->parsed()) return cmd_train_fusion(common, args);
    if (swarp->parsed()) return cmd_search_warp(common, deps, category, args);
    if (sfusion->parsed()) return cmd_search_fusion(common, deps, args);
    if (ft->parsed()) return cmd_finetune(common, deps, genome_file, category, args);
    if (ev->parsed()) return cmd_eval(common, deps, split, fid_embedder, fid->count() > 0, args);
    if (tr->parsed()) return cmd_tryon(common, deps, person, garment, split, args);
    if (rep->parsed()) return cmd_report(common, report_runs, report_out);
  } catch (const Error& e) {
    std::cerr << "error[" << error_kind_name(e.kind()) << "]: " << e.what() << '\n';
    return static_cast<int>(e.kind());
  } catch (const c10::Error& e) {
    std::cerr << "error[tensor]: " << e.what_without_backtrace() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error[internal]: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
