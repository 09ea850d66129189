#pragma once

// Run directories, checkpoint lookup and plotting for the command-line tool.

#include <filesystem>
#include <string>
#include <vector>

#include "warpnas/config.hpp"
#include "warpnas/metrics.hpp"
#include "warpnas/training.hpp"

namespace warpnas::cli {

namespace fs = std::filesystem;

/// An append-only directory <root>/<id>. Creating one that exists is an
/// error; the resolved config is written before anything else.
class RunDir {
 public:
  static RunDir create(const fs::path& root, const std::string& id, const std::string& command,
                       const ExperimentConfig& cfg, const std::vector<std::string>& overrides,
                       const std::vector<std::string>& argv);
  static RunDir open(const fs::path& root, const std::string& id, std::string_view needed_by);

  const fs::path& path() const { return path_; }
  const std::string& id() const { return id_; }
  fs::path checkpoints() const { return path_ / "checkpoints"; }
  fs::path images() const;
  fs::path metrics() const { return path_ / "metrics.tsv"; }
  ExperimentConfig config() const;
  std::string command() const;

  void add_metrics(const std::string& split, const std::vector<std::pair<std::string, double>>& values) const;
  void write_curve(const std::string& name, const std::vector<EpochSummary>& epochs) const;
  void write_text(const std::string& name, const std::string& text) const;

 private:
  fs::path path_;
  std::string id_;
};

struct LoadedCheckpoint {
  CheckpointManifest manifest;
  fs::path directory;
  fs::path file(std::string_view name) const;
};

/// Latest per-epoch checkpoint of `stage` in a run. MissingDependencyError
/// names the command that produces it when absent.
LoadedCheckpoint latest_checkpoint(const RunDir& run, std::string_view stage, std::string_view producer);

void write_image(const fs::path& path, const Tensor& image);

struct Series {
  std::string label;
  std::vector<double> values;
};

/// Line plot of one or more series against their index, written as PNG.
void plot_series(const fs::path& path, const std::string& title, const std::string& x_label,
                 const std::vector<Series>& series);

/// Reads a curve file written by RunDir::write_curve.
std::vector<std::vector<double>> read_curve(const fs::path& path);

}  // namespace warpnas::cli
