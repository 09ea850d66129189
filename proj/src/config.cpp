#include "warpnas/config.hpp"

#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "warpnas/errors.hpp"

namespace warpnas {

using json = nlohmann::json;

namespace {

json stage_json(const StageConfig& s) {
  return {{"epochs", s.epochs}, {"batch_size", s.batch_size}, {"lr", s.lr}, {"base_width", s.base_width}};
}

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.contains(key)) throw ConfigError("unknown config key '" + where + (where.empty() ? "" : ".") + key + "'");
  }
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + where + "." + key + "' has the wrong type");
  }
}

StageConfig stage_from(const json& j, StageConfig s, const std::string& where) {
  reject_unknown(j, {"epochs", "batch_size", "lr", "base_width"}, where);
  read(j, "epochs", s.epochs, where);
  read(j, "batch_size", s.batch_size, where);
  read(j, "lr", s.lr, where);
  read(j, "base_width", s.base_width, where);
  return s;
}

json to_json(const ExperimentConfig& c) {
  json search{{"max_iterations", c.search.max_iterations}, {"population", c.search.population},
              {"crossover_count", c.search.crossover_count}, {"mutation_count", c.search.mutation_count},
              {"elitism_k", c.search.elitism_k}, {"mutation_prob", c.search.mutation_prob}};
  return {{"resolution", c.resolution.str()},
          {"dataset", c.dataset},
          {"seed", c.seed},
          {"data",
           {{"train_per_category", c.layout.train_per_category},
            {"val_per_category", c.layout.val_per_category},
            {"test_per_category", c.layout.test_per_category}}},
          {"ppp", stage_json(c.ppp)},
          {"warp", stage_json(c.warp)},
          {"fusion", stage_json(c.fusion)},
          {"finetune", stage_json(c.finetune)},
          {"adam", {{"beta1", c.beta1}, {"beta2", c.beta2}}},
          {"loss",
           {{"adv", c.lambda_adv}, {"perc", c.lambda_perc}, {"tv", c.lambda_tv}, {"tv_reduction", c.tv_reduction}}},
          {"search", search}};
}

ExperimentConfig from_json(const json& j) {
  ExperimentConfig c;
  reject_unknown(j, {"resolution", "dataset", "seed", "data", "ppp", "warp", "fusion", "finetune", "adam", "loss",
                     "search"},
                 "");
  std::string res = c.resolution.str();
  read(j, "resolution", res, "");
  c.resolution = Resolution::parse(res);
  read(j, "dataset", c.dataset, "");
  read(j, "seed", c.seed, "");
  if (j.contains("data")) {
    const auto& d = j.at("data");
    reject_unknown(d, {"train_per_category", "val_per_category", "test_per_category"}, "data");
    read(d, "train_per_category", c.layout.train_per_category, "data");
    read(d, "val_per_category", c.layout.val_per_category, "data");
    read(d, "test_per_category", c.layout.test_per_category, "data");
  }
  if (j.contains("ppp")) c.ppp = stage_from(j.at("ppp"), c.ppp, "ppp");
  if (j.contains("warp")) c.warp = stage_from(j.at("warp"), c.warp, "warp");
  if (j.contains("fusion")) c.fusion = stage_from(j.at("fusion"), c.fusion, "fusion");
  if (j.contains("finetune")) c.finetune = stage_from(j.at("finetune"), c.finetune, "finetune");
  if (j.contains("adam")) {
    reject_unknown(j.at("adam"), {"beta1", "beta2"}, "adam");
    read(j.at("adam"), "beta1", c.beta1, "adam");
    read(j.at("adam"), "beta2", c.beta2, "adam");
  }
  if (j.contains("loss")) {
    const auto& l = j.at("loss");
    reject_unknown(l, {"adv", "perc", "tv", "tv_reduction"}, "loss");
    read(l, "adv", c.lambda_adv, "loss");
    read(l, "perc", c.lambda_perc, "loss");
    read(l, "tv", c.lambda_tv, "loss");
    read(l, "tv_reduction", c.tv_reduction, "loss");
  }
  if (j.contains("search")) {
    const auto& s = j.at("search");
    reject_unknown(s, {"max_iterations", "population", "crossover_count", "mutation_count", "elitism_k",
                       "mutation_prob"},
                   "search");
    read(s, "max_iterations", c.search.max_iterations, "search");
    read(s, "population", c.search.population, "search");
    read(s, "crossover_count", c.search.crossover_count, "search");
    read(s, "mutation_count", c.search.mutation_count, "search");
    read(s, "elitism_k", c.search.elitism_k, "search");
    read(s, "mutation_prob", c.search.mutation_prob, "search");
  }
  c.validate();
  return c;
}

}  // namespace

void ExperimentConfig::validate() const {
  for (const auto* s : {&ppp, &warp, &fusion, &finetune}) {
    if (s->epochs < 0 || s->batch_size < 1 || s->lr < 0.0 || s->base_width < 0) {
      throw ConfigError("stage settings need epochs >= 0, batch_size >= 1, lr >= 0, base_width >= 0");
    }
  }
  if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) throw ConfigError("Adam betas must lie in [0,1)");
  if (lambda_adv < 0 || lambda_perc < 0 || lambda_tv < 0) throw ConfigError("loss weights must be non-negative");
  if (tv_reduction != "sum" && tv_reduction != "mean") throw ConfigError("loss.tv_reduction must be 'sum' or 'mean'");
  if (dataset.empty()) throw ConfigError("dataset path is empty");
  validate_resolution(resolution, fusion_levels_for_height(resolution.height));
  search.validate();
}

std::string to_json_text(const ExperimentConfig& cfg) { return to_json(cfg).dump(2); }

ExperimentConfig config_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("config is not valid JSON: ") + e.what(), e.byte);
  }
  return from_json(j);
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json_text(ss.str());
}

ExperimentConfig apply_overrides(const ExperimentConfig& cfg, const std::vector<std::string>& assignments) {
  json j = to_json(cfg);
  for (const auto& assignment : assignments) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like key.path=value: " + assignment);
    const auto key = assignment.substr(0, eq);
    const auto raw = assignment.substr(eq + 1);
    std::string pointer = "/" + key;
    for (auto& ch : pointer) {
      if (ch == '.') ch = '/';
    }
    const json::json_pointer ptr(pointer);
    if (!j.contains(ptr)) throw ConfigError("unknown config key '" + key + "'");
    json value = json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;
    j[ptr] = value;
  }
  return from_json(j);
}

ExperimentConfig apply_override(const ExperimentConfig& cfg, const std::string& assignment) {
  return apply_overrides(cfg, {assignment});
}

}  // namespace warpnas
