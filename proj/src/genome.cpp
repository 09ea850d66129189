#include "warpnas/genome.hpp"

#include <cctype>
#include <sstream>

#include "warpnas/errors.hpp"

namespace warpnas {

namespace {

int uniform_index(Rng& rng, int count) { return std::uniform_int_distribution<int>(0, count - 1)(rng); }

bool coin(Rng& rng, double p) {
  if (p <= 0.0) return false;
  if (p >= 1.0) return true;
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p;
}

WarpCell sample_cell(Rng& rng) {
  WarpCell cell;
  const int blocks = 1 + uniform_index(rng, kMaxBlocksPerCell);
  for (int i = 0; i < blocks; ++i) cell.ops.push_back(static_cast<WarpOp>(uniform_index(rng, kWarpOpCount)));
  return cell;
}

// Minimal cursor over genome text that reports absolute positions.
class Cursor {
 public:
  explicit Cursor(std::string_view text) : text_(text) {}

  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }
  bool done() {
    skip_space();
    return pos_ >= text_.size();
  }
  char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }
  std::size_t pos() const { return pos_; }

  void expect(char c) {
    skip_space();
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }
  void expect_word(std::string_view word) {
    skip_space();
    if (text_.substr(pos_, word.size()) != word) fail("expected '" + std::string(word) + "'");
    pos_ += word.size();
  }
  int digit() {
    skip_space();
    if (!std::isdigit(static_cast<unsigned char>(peek()))) fail("expected a digit");
    return text_[pos_++] - '0';
  }
  char letter() {
    skip_space();
    if (!std::isalpha(static_cast<unsigned char>(peek()))) fail("expected a letter");
    return text_[pos_++];
  }
  [[noreturn]] void fail(const std::string& what, std::optional<std::size_t> at = std::nullopt) const {
    throw ParseError(what, at.value_or(pos_));
  }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
};

// Parses "[a,b,c]" with single-character items.
template <class Convert>
auto parse_list(Cursor& cur, Convert convert) {
  std::vector<decltype(convert(cur))> items;
  cur.expect('[');
  cur.skip_space();
  if (cur.peek() == ']') cur.fail("empty list");
  while (true) {
    items.push_back(convert(cur));
    cur.skip_space();
    if (cur.peek() == ']') break;
    cur.expect(',');
  }
  cur.expect(']');
  return items;
}

}  // namespace

std::string_view category_name(Category c) {
  switch (c) {
    case Category::kShortSleeve: return "short_sleeve";
    case Category::kLongSleeve: return "long_sleeve";
    case Category::kSlingVest: return "sling_vest";
    case Category::kPants: return "pants";
    case Category::kSkirt: return "skirt";
  }
  return "unknown";
}

Category parse_category(std::string_view name) {
  for (Category c : kAllCategories) {
    if (category_name(c) == name) return c;
  }
  throw ArgumentError("unknown category '" + std::string(name) +
                      "' (expected short_sleeve, long_sleeve, sling_vest, pants or skirt)");
}

bool is_upper_body(Category c) {
  return c == Category::kShortSleeve || c == Category::kLongSleeve || c == Category::kSlingVest;
}

WarpGenome WarpGenome::uniform(int blocks, WarpOp op) {
  WarpGenome g;
  for (auto& cell : g.cells) cell.ops.assign(static_cast<std::size_t>(blocks), op);
  return g;
}

void WarpGenome::validate() const {
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto& ops = cells[i].ops;
    if (ops.empty() || ops.size() > static_cast<std::size_t>(kMaxBlocksPerCell)) {
      throw ValidationError("warp cell " + std::to_string(i) + " has " + std::to_string(ops.size()) +
                            " blocks, expected 1..3");
    }
    for (WarpOp op : ops) {
      if (static_cast<int>(op) >= kWarpOpCount) {
        throw ValidationError("warp cell " + std::to_string(i) + " has op code " +
                              std::to_string(static_cast<int>(op)) + " outside 0..3");
      }
    }
  }
}

int WarpGenome::total_blocks() const {
  int n = 0;
  for (const auto& cell : cells) n += cell.blocks();
  return n;
}

int kernel_size(DownOp op) { return 3 + static_cast<int>(op); }
int kernel_size(UpOp op) { return op == UpOp::kBilinearConv3x3 ? 3 : 5; }

FusionGenome FusionGenome::unet(int levels) {
  FusionGenome g;
  g.skips.assign(static_cast<std::size_t>(levels), SkipChoice::kSame);
  g.down_ops.assign(static_cast<std::size_t>(levels), DownOp::kConv3x3);
  g.up_ops.assign(static_cast<std::size_t>(levels), UpOp::kBilinearConv3x3);
  return g;
}

FusionGenome FusionGenome::canonical() const {
  FusionGenome g = *this;
  if (!g.skips.empty()) {
    if (g.skips.front() == SkipChoice::kNext) g.skips.front() = SkipChoice::kSame;
    if (g.skips.back() == SkipChoice::kPrevious) g.skips.back() = SkipChoice::kSame;
  }
  return g;
}

bool FusionGenome::is_canonical() const { return canonical() == *this; }

void FusionGenome::validate() const {
  if (skips.empty()) throw ValidationError("fusion genome has no levels");
  if (down_ops.size() != skips.size() || up_ops.size() != skips.size()) {
    throw ValidationError("fusion genome lists differ in length: skip=" + std::to_string(skips.size()) +
                          " down=" + std::to_string(down_ops.size()) + " up=" + std::to_string(up_ops.size()));
  }
  for (std::size_t l = 0; l < skips.size(); ++l) {
    if (static_cast<int>(skips[l]) > 2 || static_cast<int>(down_ops[l]) > 2 || static_cast<int>(up_ops[l]) > 1) {
      throw ValidationError("fusion genome level " + std::to_string(l) + " has an out-of-range gene");
    }
  }
}

WarpGenome sample_warp_genome(Rng& rng) {
  WarpGenome g;
  for (auto& cell : g.cells) cell = sample_cell(rng);
  return g;
}

FusionGenome sample_fusion_genome(Rng& rng, int levels) {
  if (levels < 1) throw ArgumentError("fusion genome needs at least one level");
  FusionGenome g;
  for (int l = 0; l < levels; ++l) {
    g.skips.push_back(static_cast<SkipChoice>(uniform_index(rng, 3)));
    g.down_ops.push_back(static_cast<DownOp>(uniform_index(rng, 3)));
    g.up_ops.push_back(static_cast<UpOp>(uniform_index(rng, 2)));
  }
  return g.canonical();
}

WarpGenome mutate(const WarpGenome& genome, double per_gene_prob, Rng& rng) {
  genome.validate();
  WarpGenome out = genome;
  for (auto& cell : out.cells) {
    if (coin(rng, per_gene_prob)) {
      const int blocks = 1 + uniform_index(rng, kMaxBlocksPerCell);
      if (blocks != cell.blocks()) {
        cell.ops.clear();
        for (int i = 0; i < blocks; ++i) cell.ops.push_back(static_cast<WarpOp>(uniform_index(rng, kWarpOpCount)));
        continue;
      }
    }
    for (auto& op : cell.ops) {
      if (coin(rng, per_gene_prob)) op = static_cast<WarpOp>(uniform_index(rng, kWarpOpCount));
    }
  }
  return out;
}

FusionGenome mutate(const FusionGenome& genome, double per_gene_prob, Rng& rng) {
  genome.validate();
  FusionGenome out = genome;
  for (int l = 0; l < out.levels(); ++l) {
    if (coin(rng, per_gene_prob)) out.skips[l] = static_cast<SkipChoice>(uniform_index(rng, 3));
    if (coin(rng, per_gene_prob)) out.down_ops[l] = static_cast<DownOp>(uniform_index(rng, 3));
    if (coin(rng, per_gene_prob)) out.up_ops[l] = static_cast<UpOp>(uniform_index(rng, 2));
  }
  return out.canonical();
}

WarpGenome crossover(const WarpGenome& a, const WarpGenome& b, Rng& rng) {
  WarpGenome child;
  for (std::size_t i = 0; i < child.cells.size(); ++i) child.cells[i] = coin(rng, 0.5) ? a.cells[i] : b.cells[i];
  return child;
}

FusionGenome crossover(const FusionGenome& a, const FusionGenome& b, Rng& rng) {
  if (a.levels() != b.levels()) {
    throw ArgumentError("cannot cross fusion genomes with " + std::to_string(a.levels()) + " and " +
                        std::to_string(b.levels()) + " levels");
  }
  FusionGenome child = a;
  for (int l = 0; l < a.levels(); ++l) {
    if (coin(rng, 0.5)) {
      child.skips[l] = b.skips[l];
      child.down_ops[l] = b.down_ops[l];
      child.up_ops[l] = b.up_ops[l];
    }
  }
  return child.canonical();
}

Genome crossover(const Genome& a, const Genome& b, Rng& rng) {
  if (a.index() != b.index()) throw ArgumentError("cannot cross a warp genome with a fusion genome");
  if (const auto* wa = std::get_if<WarpGenome>(&a)) return crossover(*wa, std::get<WarpGenome>(b), rng);
  return crossover(std::get<FusionGenome>(a), std::get<FusionGenome>(b), rng);
}

int hamming_distance(const WarpGenome& a, const WarpGenome& b) {
  int d = 0;
  for (std::size_t i = 0; i < a.cells.size(); ++i) {
    const auto& x = a.cells[i].ops;
    const auto& y = b.cells[i].ops;
    if (x.size() != y.size()) ++d;
    for (std::size_t j = 0; j < static_cast<std::size_t>(kMaxBlocksPerCell); ++j) {
      const bool in_x = j < x.size();
      const bool in_y = j < y.size();
      if (in_x != in_y || (in_x && x[j] != y[j])) ++d;
    }
  }
  return d;
}

int hamming_distance(const FusionGenome& a, const FusionGenome& b) {
  if (a.levels() != b.levels()) throw ArgumentError("fusion genomes differ in depth");
  int d = 0;
  for (int l = 0; l < a.levels(); ++l) {
    d += (a.skips[l] != b.skips[l]) + (a.down_ops[l] != b.down_ops[l]) + (a.up_ops[l] != b.up_ops[l]);
  }
  return d;
}

std::string serialize(const WarpGenome& genome) {
  std::ostringstream out;
  for (std::size_t i = 0; i < genome.cells.size(); ++i) {
    if (i) out << ' ';
    out << '(';
    const auto& ops = genome.cells[i].ops;
    for (std::size_t j = 0; j < ops.size(); ++j) out << (j ? "," : "") << static_cast<int>(ops[j]);
    out << ')';
  }
  return out.str();
}

std::string serialize(const FusionGenome& genome) {
  static constexpr char kSkipLetters[] = {'s', 'p', 'n'};
  std::ostringstream out;
  auto list = [&](const char* key, int count, auto item) {
    out << key << "=[";
    for (int l = 0; l < count; ++l) out << (l ? "," : "") << item(l);
    out << ']';
  };
  list("skip", genome.levels(), [&](int l) { return kSkipLetters[static_cast<int>(genome.skips[l])]; });
  out << ' ';
  list("down", genome.levels(), [&](int l) { return kernel_size(genome.down_ops[l]); });
  out << ' ';
  list("up", genome.levels(), [&](int l) { return kernel_size(genome.up_ops[l]); });
  return out.str();
}

std::string serialize(const Genome& genome) {
  return std::visit([](const auto& g) { return serialize(g); }, genome);
}

WarpGenome parse_warp_genome(std::string_view text) {
  Cursor cur(text);
  WarpGenome g;
  for (int i = 0; i < kWarpCells; ++i) {
    if (cur.done()) cur.fail("expected 5 cells, found " + std::to_string(i));
    cur.expect('(');
    auto& ops = g.cells[static_cast<std::size_t>(i)].ops;
    while (true) {
      const std::size_t at = (cur.skip_space(), cur.pos());
      const int code = cur.digit();
      if (code >= kWarpOpCount) cur.fail("op code out of range: " + std::to_string(code), at);
      if (ops.size() == static_cast<std::size_t>(kMaxBlocksPerCell)) cur.fail("more than 3 blocks in a cell", at);
      ops.push_back(static_cast<WarpOp>(code));
      cur.skip_space();
      if (cur.peek() == ')') break;
      cur.expect(',');
    }
    cur.expect(')');
  }
  if (!cur.done()) cur.fail("trailing characters after 5 cells");
  return g;
}

FusionGenome parse_fusion_genome(std::string_view text) {
  Cursor cur(text);
  FusionGenome g;
  cur.expect_word("skip=");
  g.skips = parse_list(cur, [](Cursor& c) {
    const std::size_t at = (c.skip_space(), c.pos());
    switch (c.letter()) {
      case 's': return SkipChoice::kSame;
      case 'p': return SkipChoice::kPrevious;
      case 'n': return SkipChoice::kNext;
      default: c.fail("skip must be s, p or n", at);
    }
  });
  cur.expect_word("down=");
  g.down_ops = parse_list(cur, [](Cursor& c) {
    const std::size_t at = (c.skip_space(), c.pos());
    const int k = c.digit();
    if (k < 3 || k > 5) c.fail("down kernel must be 3, 4 or 5", at);
    return static_cast<DownOp>(k - 3);
  });
  cur.expect_word("up=");
  g.up_ops = parse_list(cur, [](Cursor& c) {
    const std::size_t at = (c.skip_space(), c.pos());
    const int k = c.digit();
    if (k != 3 && k != 5) c.fail("up kernel must be 3 or 5", at);
    return k == 3 ? UpOp::kBilinearConv3x3 : UpOp::kBilinearConv5x5;
  });
  if (!cur.done()) cur.fail("trailing characters");
  if (g.down_ops.size() != g.skips.size() || g.up_ops.size() != g.skips.size()) {
    throw ParseError("skip/down/up lists differ in length", text.size());
  }
  return g;
}

Genome parse_genome(std::string_view text) {
  std::size_t i = 0;
  while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
  if (i < text.size() && text[i] == '(') return parse_warp_genome(text);
  if (text.substr(i, 5) == "skip=") return parse_fusion_genome(text);
  throw ParseError("unrecognised genome text", i);
}

}  // namespace warpnas
