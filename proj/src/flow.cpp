#include "warpnas/flow.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <sstream>

#include "warpnas/errors.hpp"

namespace warpnas {

namespace {

constexpr std::array<char, 4> kFlowMagic{'W', 'F', 'L', 'O'};

void require_same_size(const FlowField& a, const FlowField& b, std::string_view op) {
  if (a.values().sizes() != b.values().sizes()) {
    std::ostringstream err;
    err << op << ": flow sizes differ, " << a.values().sizes() << " vs " << b.values().sizes();
    throw ShapeError(err.str());
  }
}

}  // namespace

FlowField::FlowField(Tensor values) : values_(std::move(values)) {
  require_rank4(values_, "flow");
  if (values_.size(1) != 2) {
    throw ShapeError("flow field must have exactly 2 channels, got " + std::to_string(values_.size(1)));
  }
}

FlowField FlowField::zeros(int64_t batch, int64_t height, int64_t width, const torch::TensorOptions& options) {
  return FlowField(torch::zeros({batch, 2, height, width}, options));
}

Tensor grid_warp(const Tensor& x, const FlowField& flow) { return grid_warp(x, flow.values()); }

FlowField compose_flows(const FlowField& accumulated, const FlowField& next) {
  require_same_size(accumulated, next, "compose_flows");
  return FlowField(grid_warp(accumulated.values(), next.values()) + next.values());
}

FlowField upsample_flow(const FlowField& flow, int factor) {
  if (factor != 2) throw ArgumentError("upsample_flow supports factor 2 only, got " + std::to_string(factor));
  return FlowField(bilinear_resize(flow.values(), flow.height() * 2, flow.width() * 2) * 2.0);
}

Tensor tv_loss(const FlowField& flow, TvReduction reduction) {
  using torch::indexing::None;
  using torch::indexing::Slice;
  const auto& f = flow.values();
  auto dx = (f.index({Slice(), Slice(), Slice(), Slice(1, None)}) -
             f.index({Slice(), Slice(), Slice(), Slice(None, -1)}))
                .abs()
                .sum({1, 2, 3});
  auto dy = (f.index({Slice(), Slice(), Slice(1, None), Slice()}) -
             f.index({Slice(), Slice(), Slice(None, -1), Slice()}))
                .abs()
                .sum({1, 2, 3});
  auto per_sample = dx + dy;
  if (reduction == TvReduction::kMean) {
    per_sample = per_sample / static_cast<double>(2 * flow.height() * flow.width());
  }
  return per_sample.mean();
}

void write_flow(const std::filesystem::path& path, const FlowField& flow) {
  if (flow.batch() != 1) throw ArgumentError("write_flow expects a single-sample flow");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  const auto data = flow.values().detach().to(torch::kFloat32).contiguous();
  const uint32_t h = static_cast<uint32_t>(flow.height());
  const uint32_t w = static_cast<uint32_t>(flow.width());
  out.write(kFlowMagic.data(), kFlowMagic.size());
  out.write(reinterpret_cast<const char*>(&h), sizeof h);
  out.write(reinterpret_cast<const char*>(&w), sizeof w);
  out.write(reinterpret_cast<const char*>(data.data_ptr<float>()),
            static_cast<std::streamsize>(data.numel() * sizeof(float)));
  if (!out) throw IoError("failed writing " + path.string());
}

FlowField read_flow(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::array<char, 4> magic{};
  uint32_t h = 0;
  uint32_t w = 0;
  in.read(magic.data(), magic.size());
  in.read(reinterpret_cast<char*>(&h), sizeof h);
  in.read(reinterpret_cast<char*>(&w), sizeof w);
  if (!in || magic != kFlowMagic) throw ParseError(path.string() + " is not a flow raster", 0);
  auto values = torch::empty({1, 2, static_cast<int64_t>(h), static_cast<int64_t>(w)}, torch::kFloat32);
  in.read(reinterpret_cast<char*>(values.data_ptr<float>()),
          static_cast<std::streamsize>(values.numel() * sizeof(float)));
  if (!in) throw IoError(path.string() + " is truncated");
  return FlowField(values);
}

}  // namespace warpnas
