#pragma once

// Experiment configuration: nested JSON with schema validation and
// `section.key=value` overrides.

#include <filesystem>
#include <string>
#include <vector>

#include "warpnas/evolution.hpp"
#include "warpnas/synthdata.hpp"

namespace warpnas {

struct StageConfig {
  int epochs = 1;
  int batch_size = 8;
  double lr = 0.0;
  int64_t base_width = 0;  // 0 = stage default
};

struct ExperimentConfig {
  Resolution resolution{96, 128};
  std::string dataset = "data";
  uint64_t seed = 1;
  DatasetLayout layout;
  StageConfig ppp{3, 8, 0.002, 32};
  StageConfig warp{20, 8, 0.0002, 0};
  StageConfig fusion{20, 8, 0.0001, 32};
  StageConfig finetune{2, 8, 0.0, 0};
  double beta1 = 0.5;
  double beta2 = 0.999;
  double lambda_adv = 0.1;
  double lambda_perc = 0.1;
  double lambda_tv = 0.3;
  std::string tv_reduction = "mean";
  SearchConfig search;

  void validate() const;
};

std::string to_json_text(const ExperimentConfig& cfg);
/// Throws ConfigError on unknown keys, wrong types or invalid values.
ExperimentConfig config_from_json_text(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Applies "a.b=value"; value is read as JSON when it parses, else as a
/// string. Throws ConfigError for unknown paths.
ExperimentConfig apply_override(const ExperimentConfig& cfg, const std::string& assignment);
/// Applies every assignment before validating, so interdependent values can
/// change together.
ExperimentConfig apply_overrides(const ExperimentConfig& cfg, const std::vector<std::string>& assignments);

}  // namespace warpnas
