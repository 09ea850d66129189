#pragma once

// Evolutionary search over genomes with elitism, crossover, mutation and
// fresh-sample refill. The search loop is generic in the genome type; the
// only requirement is a serialize() overload used for deduplication and the
// fitness cache.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "warpnas/errors.hpp"
#include "warpnas/genome.hpp"

namespace warpnas {

struct SearchConfig {
  int max_iterations = 25;
  int population = 40;
  int crossover_count = 15;
  int mutation_count = 15;
  int elitism_k = 10;
  double mutation_prob = 0.1;
  std::optional<Category> category;

  /// Throws ConfigError when the budgets exceed the population or any count
  /// is out of range.
  void validate() const;
};

struct Candidate {
  std::string genome;
  double fitness = 0.0;
};

struct GenerationRecord {
  int generation = 0;
  std::vector<Candidate> candidates;  // sorted by descending fitness
  Candidate best_so_far;
};

struct SearchRecord {
  std::string kind;  // "warp" or "fusion"
  std::optional<Category> category;
  uint64_t seed = 0;
  std::string checkpoint_id;
  SearchConfig config;
  std::vector<GenerationRecord> generations;
  int evaluations = 0;  // distinct genomes scored

  const Candidate& best() const;
  std::vector<double> best_trajectory() const;
};

/// One JSON object per line: a header line, then one line per generation.
void write_search_record(const std::filesystem::path& path, const SearchRecord& record);
SearchRecord read_search_record(const std::filesystem::path& path);

namespace detail {
inline constexpr int kDedupeAttempts = 64;
}

template <class G>
SearchRecord evolve(const SearchConfig& config, const std::function<G(Rng&)>& sample_fn,
                    const std::function<G(const G&, double, Rng&)>& mutate_fn,
                    const std::function<G(const G&, const G&, Rng&)>& crossover_fn,
                    const std::function<double(const G&)>& fitness_fn, Rng& rng) {
  config.validate();
  SearchRecord record;
  record.config = config;
  record.category = config.category;

  std::unordered_map<std::string, double> cache;
  auto score = [&](const G& g) {
    const auto key = serialize(g);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    const double f = fitness_fn(g);
    cache.emplace(key, f);
    return f;
  };

  struct Member {
    G genome;
    std::string key;
    double fitness = 0.0;
  };

  // Adds the first of up to kDedupeAttempts draws that is neither in this
  // generation nor already scored; the last draw is kept regardless so tiny
  // spaces terminate.
  auto add_unique = [&](std::vector<Member>& pop, std::unordered_set<std::string>& seen, auto&& draw) {
    for (int attempt = 0;; ++attempt) {
      G g = draw();
      auto key = serialize(g);
      const bool fresh = !seen.contains(key) && !cache.contains(key);
      if (fresh || attempt + 1 >= detail::kDedupeAttempts) {
        seen.insert(key);
        pop.push_back({std::move(g), std::move(key), 0.0});
        return;
      }
    }
  };

  std::vector<Member> population;
  std::unordered_set<std::string> seen;
  for (int i = 0; i < config.population; ++i) add_unique(population, seen, [&] { return sample_fn(rng); });

  Candidate best_so_far{"", -std::numeric_limits<double>::infinity()};
  for (int gen = 0; gen < config.max_iterations; ++gen) {
    for (auto& m : population) m.fitness = score(m.genome);
    // Random order among equal fitness keeps the elite set from freezing.
    std::shuffle(population.begin(), population.end(), rng);
    std::stable_sort(population.begin(), population.end(),
                     [](const Member& a, const Member& b) { return a.fitness > b.fitness; });
    if (population.front().fitness > best_so_far.fitness) {
      best_so_far = {population.front().key, population.front().fitness};
    }
    GenerationRecord gr;
    gr.generation = gen;
    for (const auto& m : population) gr.candidates.push_back({m.key, m.fitness});
    gr.best_so_far = best_so_far;
    record.generations.push_back(std::move(gr));
    if (gen + 1 == config.max_iterations) break;

    const int k = std::min<int>(config.elitism_k, static_cast<int>(population.size()));
    std::vector<Member> next(population.begin(), population.begin() + k);
    std::unordered_set<std::string> next_seen;
    for (const auto& m : next) next_seen.insert(m.key);
    std::uniform_int_distribution<int> pick(0, k - 1);

    for (int i = 0; i < config.crossover_count; ++i) {
      add_unique(next, next_seen, [&] {
        const int a = pick(rng);
        int b = pick(rng);
        if (k > 1) {
          while (b == a) b = pick(rng);
        }
        return crossover_fn(next[a].genome, next[b].genome, rng);
      });
    }
    for (int i = 0; i < config.mutation_count; ++i) {
      add_unique(next, next_seen, [&] { return mutate_fn(next[pick(rng)].genome, config.mutation_prob, rng); });
    }
    while (static_cast<int>(next.size()) < config.population) {
      add_unique(next, next_seen, [&] { return sample_fn(rng); });
    }
    population = std::move(next);
  }
  record.evaluations = static_cast<int>(cache.size());
  return record;
}

/// Warp-genome search wiring the standard operators.
SearchRecord evolve_warp(const SearchConfig& config, const std::function<double(const WarpGenome&)>& fitness_fn,
                         uint64_t seed);

/// Fusion-genome search at the given depth.
SearchRecord evolve_fusion(const SearchConfig& config, int levels,
                           const std::function<double(const FusionGenome&)>& fitness_fn, uint64_t seed);

}  // namespace warpnas
