#pragma once

// Discrete architecture encodings for the warping and fusion supernets.

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace warpnas {

using Rng = std::mt19937_64;

enum class Category : uint8_t { kShortSleeve = 0, kLongSleeve, kSlingVest, kPants, kSkirt };

inline constexpr std::array<Category, 5> kAllCategories{Category::kShortSleeve, Category::kLongSleeve,
                                                        Category::kSlingVest, Category::kPants, Category::kSkirt};

std::string_view category_name(Category c);
/// Throws ArgumentError on unknown names.
Category parse_category(std::string_view name);
/// Upper-body garments replace the torso region, lower-body ones the legs.
bool is_upper_body(Category c);

// ---- warping ---------------------------------------------------------------

/// Flow-convolution candidates, coded as in the published architecture table.
enum class WarpOp : uint8_t { kConv1x1 = 0, kConv3x3 = 1, kSeparable1x1 = 2, kSeparable3x3 = 3 };

inline constexpr int kWarpCells = 5;
inline constexpr int kMaxBlocksPerCell = 3;
inline constexpr int kWarpOpCount = 4;

struct WarpCell {
  std::vector<WarpOp> ops;  // one op per warping block; size is the branch (1..3)
  int blocks() const { return static_cast<int>(ops.size()); }
  bool operator==(const WarpCell&) const = default;
};

struct WarpGenome {
  std::array<WarpCell, kWarpCells> cells;

  /// Every cell with `blocks` copies of `op`.
  static WarpGenome uniform(int blocks, WarpOp op);
  void validate() const;  // throws ValidationError
  int total_blocks() const;
  bool operator==(const WarpGenome&) const = default;
};

// ---- fusion ----------------------------------------------------------------

/// Skip source for a decoder level: the encoder level with the same index,
/// one level coarser ("previous") or one level finer ("next").
enum class SkipChoice : uint8_t { kSame = 0, kPrevious = 1, kNext = 2 };
enum class DownOp : uint8_t { kConv3x3 = 0, kConv4x4 = 1, kConv5x5 = 2 };
enum class UpOp : uint8_t { kBilinearConv3x3 = 0, kBilinearConv5x5 = 1 };

int kernel_size(DownOp op);
int kernel_size(UpOp op);

inline constexpr int kDefaultFusionLevels = 5;

/// Fusion depth used for a canvas height: 5 levels, or 4 below 128 rows.
inline int fusion_levels_for_height(int64_t height) { return height < 128 ? 4 : kDefaultFusionLevels; }

/// Level 0 is the shallowest (highest resolution) level.
struct FusionGenome {
  std::vector<SkipChoice> skips;
  std::vector<DownOp> down_ops;
  std::vector<UpOp> up_ops;

  static FusionGenome unet(int levels = kDefaultFusionLevels);
  int levels() const { return static_cast<int>(skips.size()); }
  /// Rewrites boundary skips that point outside the encoder to kSame.
  FusionGenome canonical() const;
  bool is_canonical() const;
  void validate() const;  // lengths agree and are positive
  bool operator==(const FusionGenome&) const = default;
};

// ---- operators ---------------------------------------------------------------

WarpGenome sample_warp_genome(Rng& rng);
FusionGenome sample_fusion_genome(Rng& rng, int levels = kDefaultFusionLevels);

WarpGenome mutate(const WarpGenome& genome, double per_gene_prob, Rng& rng);
FusionGenome mutate(const FusionGenome& genome, double per_gene_prob, Rng& rng);

WarpGenome crossover(const WarpGenome& a, const WarpGenome& b, Rng& rng);
/// Throws ArgumentError when the parents have different depths.
FusionGenome crossover(const FusionGenome& a, const FusionGenome& b, Rng& rng);

/// Number of differing scalar genes; zero iff the genomes are equal.
int hamming_distance(const WarpGenome& a, const WarpGenome& b);
int hamming_distance(const FusionGenome& a, const FusionGenome& b);

using Genome = std::variant<WarpGenome, FusionGenome>;

/// Throws ArgumentError when the parents are different genome kinds.
Genome crossover(const Genome& a, const Genome& b, Rng& rng);

// ---- text format ---------------------------------------------------------------

/// Warp genomes: one parenthesised op list per cell, e.g.
/// "(0,2,1) (0) (2) (2,1) (1,3)".
std::string serialize(const WarpGenome& genome);
/// Fusion genomes: "skip=[s,p,n,s,s] down=[3,4,5,3,3] up=[3,5,3,3,5]"; kernel
/// sizes name the down/up candidates.
std::string serialize(const FusionGenome& genome);
std::string serialize(const Genome& genome);

/// Throws ParseError with the offending position.
WarpGenome parse_warp_genome(std::string_view text);
FusionGenome parse_fusion_genome(std::string_view text);
/// Detects the kind from the leading token.
Genome parse_genome(std::string_view text);

}  // namespace warpnas
