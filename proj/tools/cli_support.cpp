#include "cli_support.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <sstream>

#include "warpnas/errors.hpp"

namespace warpnas::cli {

using json = nlohmann::json;

RunDir RunDir::create(const fs::path& root, const std::string& id, const std::string& command,
                      const ExperimentConfig& cfg, const std::vector<std::string>& overrides,
                      const std::vector<std::string>& argv) {
  if (id.empty() || id.find('/') != std::string::npos || id == "." || id == "..") {
    throw ArgumentError("invalid run id '" + id + "'");
  }
  RunDir run;
  run.id_ = id;
  run.path_ = root / id;
  fs::create_directories(root);
  std::error_code ec;
  if (!fs::create_directory(run.path_, ec)) {
    if (ec) throw IoError("cannot create run directory " + run.path_.string() + ": " + ec.message());
    throw ArgumentError("run '" + id + "' already exists in " + root.string() +
                        "; run directories are append-only, choose a new --run-id");
  }
  run.write_text("config.json", to_json_text(cfg) + "\n");
  json manifest{{"run_id", id}, {"command", command}, {"overrides", overrides}, {"argv", argv}};
  run.write_text("run.json", manifest.dump(2) + "\n");
  return run;
}

RunDir RunDir::open(const fs::path& root, const std::string& id, std::string_view needed_by) {
  RunDir run;
  run.id_ = id;
  run.path_ = root / id;
  if (!fs::exists(run.path_ / "run.json")) {
    throw MissingDependencyError(std::string(needed_by) + " needs run '" + id + "', which does not exist in " +
                                 root.string());
  }
  return run;
}

fs::path RunDir::images() const {
  const auto p = path_ / "images";
  fs::create_directories(p);
  return p;
}

ExperimentConfig RunDir::config() const { return load_config(path_ / "config.json"); }

std::string RunDir::command() const {
  std::ifstream in(path_ / "run.json");
  return json::parse(in).at("command").get<std::string>();
}

void RunDir::add_metrics(const std::string& split, const std::vector<std::pair<std::string, double>>& values) const {
  std::vector<MetricRow> rows;
  for (const auto& [metric, value] : values) rows.push_back({id_, split, metric, value});
  append_metric_rows(metrics(), rows);
}

void RunDir::write_curve(const std::string& name, const std::vector<EpochSummary>& epochs) const {
  std::ofstream out(path_ / name);
  out << "epoch\tmean_loss\tvalidation\n";
  for (const auto& e : epochs) out << e.epoch << '\t' << e.mean_loss << '\t' << e.validation << '\n';
  if (!out) throw IoError("cannot write " + (path_ / name).string());
}

void RunDir::write_text(const std::string& name, const std::string& text) const {
  const auto p = path_ / name;
  if (fs::exists(p)) throw IoError("refusing to overwrite " + p.string());
  std::ofstream out(p);
  out << text;
  if (!out) throw IoError("cannot write " + p.string());
}

fs::path LoadedCheckpoint::file(std::string_view name) const {
  for (const auto& f : manifest.files) {
    if (f.ends_with("_" + std::string(name) + ".pt")) return directory / f;
  }
  throw MissingDependencyError("checkpoint " + std::to_string(manifest.epoch) + " has no '" + std::string(name) +
                               "' weights");
}

LoadedCheckpoint latest_checkpoint(const RunDir& run, std::string_view stage, std::string_view producer) {
  LoadedCheckpoint out;
  out.directory = run.checkpoints();
  int best = -1;
  if (fs::exists(out.directory)) {
    for (const auto& entry : fs::directory_iterator(out.directory)) {
      if (entry.path().extension() != ".json") continue;
      auto m = read_checkpoint_manifest(entry.path());
      if (m.stage == stage && m.epoch > best) {
        best = m.epoch;
        out.manifest = std::move(m);
      }
    }
  }
  if (best < 0) {
    throw MissingDependencyError("run '" + run.id() + "' has no " + std::string(stage) + " checkpoint; run `" +
                                 std::string(producer) + "` first");
  }
  return out;
}

void write_image(const fs::path& path, const Tensor& image) {
  auto t = image.detach().to(torch::kFloat32);
  if (t.dim() == 4) t = t[0];
  if (t.dim() != 3) throw ShapeError("write_image expects (C,H,W) or (1,C,H,W)");
  if (t.size(0) == 1) t = t.expand({3, t.size(1), t.size(2)});
  t = (t.clamp(0, 1) * 255.0).round().to(torch::kUInt8).permute({1, 2, 0}).flip(2).contiguous();
  cv::Mat mat(static_cast<int>(t.size(0)), static_cast<int>(t.size(1)), CV_8UC3, t.data_ptr());
  if (!cv::imwrite(path.string(), mat)) throw IoError("cannot write image " + path.string());
}

void plot_series(const fs::path& path, const std::string& title, const std::string& x_label,
                 const std::vector<Series>& series) {
  constexpr int kW = 720, kH = 420, kLeft = 70, kRight = 20, kTop = 40, kBottom = 50;
  cv::Mat canvas(kH, kW, CV_8UC3, cv::Scalar(255, 255, 255));
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  std::size_t n = 0;
  for (const auto& s : series) {
    for (double v : s.values) {
      if (!std::isfinite(v)) continue;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    n = std::max(n, s.values.size());
  }
  if (!std::isfinite(lo)) lo = 0, hi = 1;
  if (hi - lo < 1e-12) lo -= 0.5, hi += 0.5;
  const auto px = [&](std::size_t i) {
    return kLeft + static_cast<int>(std::lround((kW - kLeft - kRight) * (n > 1 ? double(i) / double(n - 1) : 0.5)));
  };
  const auto py = [&](double v) {
    return kTop + static_cast<int>(std::lround((kH - kTop - kBottom) * (hi - v) / (hi - lo)));
  };
  const cv::Scalar axis(60, 60, 60);
  cv::line(canvas, {kLeft, kTop}, {kLeft, kH - kBottom}, axis);
  cv::line(canvas, {kLeft, kH - kBottom}, {kW - kRight, kH - kBottom}, axis);
  const auto label = [&](const std::string& text, cv::Point at, double scale = 0.45) {
    cv::putText(canvas, text, at, cv::FONT_HERSHEY_SIMPLEX, scale, axis, 1, cv::LINE_AA);
  };
  std::ostringstream hi_s, lo_s;
  hi_s.precision(4);
  lo_s.precision(4);
  hi_s << hi;
  lo_s << lo;
  label(hi_s.str(), {4, kTop + 4});
  label(lo_s.str(), {4, kH - kBottom});
  label(title, {kLeft, 25}, 0.6);
  label(x_label, {kW / 2 - 30, kH - 12});
  const std::array<cv::Scalar, 6> colours{cv::Scalar(200, 80, 30), cv::Scalar(40, 40, 200), cv::Scalar(40, 150, 40),
                                          cv::Scalar(150, 40, 150), cv::Scalar(20, 140, 200), cv::Scalar(90, 90, 90)};
  for (std::size_t k = 0; k < series.size(); ++k) {
    std::vector<cv::Point> pts;
    for (std::size_t i = 0; i < series[k].values.size(); ++i) {
      if (std::isfinite(series[k].values[i])) pts.emplace_back(px(i), py(series[k].values[i]));
    }
    const auto& c = colours[k % colours.size()];
    if (pts.size() > 1) cv::polylines(canvas, pts, false, c, 2, cv::LINE_AA);
    for (const auto& p : pts) cv::circle(canvas, p, 2, c, cv::FILLED);
    cv::putText(canvas, series[k].label, {kW - 200, kTop + 18 * static_cast<int>(k + 1)}, cv::FONT_HERSHEY_SIMPLEX,
                0.45, c, 1, cv::LINE_AA);
  }
  if (!cv::imwrite(path.string(), canvas)) throw IoError("cannot write plot " + path.string());
}

std::vector<std::vector<double>> read_curve(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read curve " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::vector<double> row;
    std::string cell;
    while (std::getline(ss, cell, '\t')) row.push_back(std::stod(cell));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace warpnas::cli
