#include "warpnas/evolution.hpp"

#include <fstream>
#include <json.hpp>

namespace warpnas {

using nlohmann::json;

void SearchConfig::validate() const {
  if (max_iterations < 1) throw ConfigError("search max_iterations must be positive");
  if (population < 1) throw ConfigError("search population must be positive");
  if (crossover_count < 0 || mutation_count < 0 || elitism_k < 1) {
    throw ConfigError("search budgets must be non-negative with at least one elite");
  }
  if (crossover_count + mutation_count + elitism_k > population) {
    throw ConfigError("crossover (" + std::to_string(crossover_count) + ") + mutation (" +
                      std::to_string(mutation_count) + ") + elites (" + std::to_string(elitism_k) +
                      ") exceed the population of " + std::to_string(population));
  }
  if (!(mutation_prob >= 0.0 && mutation_prob <= 1.0)) throw ConfigError("mutation_prob must lie in [0,1]");
}

const Candidate& SearchRecord::best() const {
  if (generations.empty()) throw ValidationError("search record has no generations");
  return generations.back().best_so_far;
}

std::vector<double> SearchRecord::best_trajectory() const {
  std::vector<double> out;
  for (const auto& g : generations) out.push_back(g.best_so_far.fitness);
  return out;
}

namespace {

json config_json(const SearchConfig& c) {
  json j{{"max_iterations", c.max_iterations}, {"population", c.population},
         {"crossover_count", c.crossover_count}, {"mutation_count", c.mutation_count},
         {"elitism_k", c.elitism_k}, {"mutation_prob", c.mutation_prob}};
  j["category"] = c.category ? json(std::string(category_name(*c.category))) : json(nullptr);
  return j;
}

SearchConfig config_from_json(const json& j) {
  SearchConfig c;
  c.max_iterations = j.at("max_iterations");
  c.population = j.at("population");
  c.crossover_count = j.at("crossover_count");
  c.mutation_count = j.at("mutation_count");
  c.elitism_k = j.at("elitism_k");
  c.mutation_prob = j.at("mutation_prob");
  if (!j.at("category").is_null()) c.category = parse_category(j.at("category").get<std::string>());
  return c;
}

}  // namespace

void write_search_record(const std::filesystem::path& path, const SearchRecord& record) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write search record " + path.string());
  json header{{"record", "search"},
              {"kind", record.kind},
              {"seed", record.seed},
              {"checkpoint", record.checkpoint_id},
              {"evaluations", record.evaluations},
              {"config", config_json(record.config)}};
  header["category"] = record.category ? json(std::string(category_name(*record.category))) : json(nullptr);
  out << header.dump() << '\n';
  for (const auto& g : record.generations) {
    json cands = json::array();
    for (const auto& c : g.candidates) cands.push_back({{"genome", c.genome}, {"fitness", c.fitness}});
    json line{{"generation", g.generation},
              {"candidates", cands},
              {"best_genome", g.best_so_far.genome},
              {"best_fitness", g.best_so_far.fitness}};
    out << line.dump() << '\n';
  }
  if (!out) throw IoError("failed writing search record " + path.string());
}

SearchRecord read_search_record(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read search record " + path.string());
  SearchRecord r;
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty search record", 0);
  try {
    const auto h = json::parse(line);
    r.kind = h.at("kind");
    r.seed = h.at("seed");
    r.checkpoint_id = h.at("checkpoint");
    r.evaluations = h.at("evaluations");
    r.config = config_from_json(h.at("config"));
    if (!h.at("category").is_null()) r.category = parse_category(h.at("category").get<std::string>());
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto j = json::parse(line);
      GenerationRecord g;
      g.generation = j.at("generation");
      for (const auto& c : j.at("candidates")) g.candidates.push_back({c.at("genome"), c.at("fitness")});
      g.best_so_far = {j.at("best_genome"), j.at("best_fitness")};
      r.generations.push_back(std::move(g));
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed search record: ") + e.what(), 0);
  }
  return r;
}

SearchRecord evolve_warp(const SearchConfig& config, const std::function<double(const WarpGenome&)>& fitness_fn,
                         uint64_t seed) {
  Rng rng(seed);
  auto record = evolve<WarpGenome>(
      config, [](Rng& r) { return sample_warp_genome(r); },
      [](const WarpGenome& g, double p, Rng& r) { return mutate(g, p, r); },
      [](const WarpGenome& a, const WarpGenome& b, Rng& r) { return crossover(a, b, r); }, fitness_fn, rng);
  record.kind = "warp";
  record.seed = seed;
  return record;
}

SearchRecord evolve_fusion(const SearchConfig& config, int levels,
                           const std::function<double(const FusionGenome&)>& fitness_fn, uint64_t seed) {
  Rng rng(seed);
  auto record = evolve<FusionGenome>(
      config, [levels](Rng& r) { return sample_fusion_genome(r, levels); },
      [](const FusionGenome& g, double p, Rng& r) { return mutate(g, p, r); },
      [](const FusionGenome& a, const FusionGenome& b, Rng& r) { return crossover(a, b, r); }, fitness_fn, rng);
  record.kind = "fusion";
  record.seed = seed;
  return record;
}

}  // namespace warpnas
