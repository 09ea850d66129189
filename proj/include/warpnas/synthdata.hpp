#pragma once

// Procedural try-on scenes with exact ground-truth garment deformations.
//
// A scene is stored as a few primitive rasters (flat garment, its mask, the
// ground-truth flow, the person parsing) plus a small record; everything
// else (warped garment, person image, pose heatmaps, ...) is derived from
// those primitives when a batch is materialised.

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "warpnas/flow.hpp"
#include "warpnas/genome.hpp"

namespace warpnas {

inline constexpr int kPoseKeypoints = 18;
inline constexpr int kParsingClasses = 8;
inline constexpr int kPartialClasses = 5;
inline constexpr const char* kGeneratorVersion = "synth-v1";

/// Full parsing labels.
enum ParsingLabel : uint8_t {
  kBackground = 0,
  kHead = 1,
  kUpperGarment = 2,
  kLowerGarment = 3,
  kArms = 4,
  kLegs = 5,
  kNeck = 6,
  kShoes = 7,
};

/// Partial parsing labels: only the regions that change during try-on.
/// Class 3/4 mean arms/neck for upper-body garments and legs/shoes for
/// lower-body ones.
enum PartialLabel : uint8_t {
  kUnchanged = 0,
  kPartialUpper = 1,
  kPartialLower = 2,
  kPartialLimbs = 3,
  kPartialNeckOrShoes = 4,
};

struct Resolution {
  int64_t height = 96;
  int64_t width = 128;

  /// "HxW", rows first.
  std::string str() const;
  static Resolution parse(std::string_view text);  // throws ConfigError
  bool operator==(const Resolution&) const = default;
};

/// Throws ConfigError unless both extents are positive multiples of 2^levels.
void validate_resolution(const Resolution& res, int levels);

/// Generator parameters of one garment category.
struct DeformationFamily {
  double max_rotation_deg = 10.0;
  double min_scale = 0.9;
  double max_scale = 1.1;
  double max_translation_px = 8.0;
  int control_points = 0;  // n x n elastic control grid; 0 = affine only
  double elastic_amplitude_px = 0.0;
  double max_occluded_fraction = 0.0;
};

/// Pixel amplitudes are given for a 96-row canvas and scale with height.
DeformationFamily deformation_family(Category c);

struct Rgb {
  float r = 0, g = 0, b = 0;
};

struct SceneRecord {
  std::string id;  // "<category>-<index>"
  Category category = Category::kShortSleeve;
  uint64_t index = 0;
  uint64_t seed = 0;
  Resolution resolution;
  std::array<std::array<float, 3>, kPoseKeypoints> keypoints{};  // x, y, visible
  Rgb background, skin, hair, other_garment, shoes;
  float head_split_row = 0;  // hair above this row, face below
  // diagnostics
  double rotation_deg = 0, scale = 1, translation_x = 0, translation_y = 0;
  std::optional<std::array<int, 4>> occluder;  // x0, y0, x1, y1 (exclusive)
};

/// The stored part of a scene. Tensors carry no batch dimension.
struct ScenePrimitives {
  SceneRecord record;
  Tensor garment;       // uint8 (3,H,W)
  Tensor garment_mask;  // uint8 (1,H,W), 0/1
  Tensor flow;          // float (2,H,W)
  Tensor parsing;       // uint8 (1,H,W), ParsingLabel
};

/// A materialised batch; all float tensors in [0,1] unless noted.
struct Batch {
  Tensor garment;          // C (N,3,H,W)
  Tensor garment_mask;     // M_c (N,1,H,W)
  Tensor target_mask;      // target garment region (N,1,H,W)
  Tensor warped_garment;   // C_t = grid_warp(C, gt_flow) (N,3,H,W)
  Tensor gt_flow;          // (N,2,H,W) pixels
  Tensor person;           // I (N,3,H,W)
  Tensor preserved;        // I' (N,3,H,W)
  Tensor pose;             // P (N,18,H,W)
  Tensor parsing;          // M_h one-hot (N,8,H,W)
  Tensor parsing_labels;   // (N,H,W) int64
  Tensor partial_labels;   // (N,H,W) int64, PartialLabel
  Tensor body_shape;       // S (N,1,H,W)
  Tensor head;             // H (N,3,H,W)
  std::vector<Category> categories;
  std::vector<std::string> ids;

  int64_t size() const { return garment.size(0); }
};

class Dataset {
 public:
  Dataset() = default;
  Dataset(Resolution res, std::vector<ScenePrimitives> scenes);

  const Resolution& resolution() const { return res_; }
  std::size_t size() const { return scenes_.size(); }
  bool empty() const { return scenes_.empty(); }
  const ScenePrimitives& scene(std::size_t i) const { return scenes_.at(i); }
  const std::vector<ScenePrimitives>& scenes() const { return scenes_; }

  Batch batch(std::span<const std::size_t> indices) const;
  Batch batch_range(std::size_t begin, std::size_t end) const;

  Dataset filter(Category c) const;
  std::vector<std::string> ids() const;
  std::vector<std::size_t> count_by_category() const;  // indexed by Category

  void append(const Dataset& other);

 private:
  Resolution res_;
  std::vector<ScenePrimitives> scenes_;
};

/// Derives every batch field from stored primitives.
Batch materialize(std::span<const ScenePrimitives* const> scenes);

/// Deterministic scene generation; scene i uses a seed derived from
/// (seed, category, first_index + i). Throws ConfigError for resolutions not
/// divisible by 2^levels (levels from the fusion depth rule).
Dataset generate(Category category, std::size_t count, const Resolution& res, uint64_t seed,
                 uint64_t first_index = 0);

struct SplitFractions {
  double train = 5.0 / 7.0;
  double val = 1.0 / 7.0;
  double test = 1.0 / 7.0;
};

struct Splits {
  Dataset train;
  Dataset val;
  Dataset test;
};

/// Category-stratified shuffle split. Throws ConfigError if the fractions
/// are negative or do not sum to 1.
Splits split(const Dataset& dataset, const SplitFractions& fractions, uint64_t seed);

/// Per-category counts of the standard desk dataset: 300/60/60.
struct DatasetLayout {
  std::size_t train_per_category = 300;
  std::size_t val_per_category = 60;
  std::size_t test_per_category = 60;
};

Splits generate_splits(const DatasetLayout& layout, const Resolution& res, uint64_t seed);

/// On-disk layout: <root>/manifest.json and <root>/<split>/<category>/<id>/
/// holding garment.png, garment_mask.png, parsing.png, flow.wflo,
/// record.json and person.png / warped_garment.png previews.
void save_splits(const std::filesystem::path& root, const Splits& splits, uint64_t seed);
Dataset load_split(const std::filesystem::path& root, std::string_view split_name);
/// Sample ids listed in the manifest for one split.
std::vector<std::string> manifest_ids(const std::filesystem::path& root, std::string_view split_name);

}  // namespace warpnas
