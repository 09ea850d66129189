#include "warpnas/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <random>
#include <sstream>

#include <json.hpp>

#include "warpnas/errors.hpp"

namespace warpnas {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr double kReferenceHeight = 96.0;

uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

uint64_t scene_seed(uint64_t seed, Category c, uint64_t index, uint64_t attempt) {
  return splitmix64(splitmix64(splitmix64(seed) ^ (static_cast<uint64_t>(c) + 1)) ^ index) + attempt;
}

using Point = std::array<double, 2>;

// Body landmarks in body units: x relative to the canvas centre, both axes
// scaled by canvas height. Order follows the 18-point COCO pose layout.
constexpr std::array<Point, kPoseKeypoints> kKeypointTemplate{{
    {0.0, 0.12},     // nose
    {0.0, 0.22},     // neck
    {-0.13, 0.25},   // right shoulder
    {-0.18, 0.42},   // right elbow
    {-0.2, 0.58},    // right wrist
    {0.13, 0.25},    // left shoulder
    {0.18, 0.42},    // left elbow
    {0.2, 0.58},     // left wrist
    {-0.08, 0.58},   // right hip
    {-0.09, 0.76},   // right knee
    {-0.1, 0.93},    // right ankle
    {0.08, 0.58},    // left hip
    {0.09, 0.76},    // left knee
    {0.1, 0.93},     // left ankle
    {-0.025, 0.1},   // right eye
    {0.025, 0.1},    // left eye
    {-0.05, 0.11},   // right ear
    {0.05, 0.11},    // left ear
}};

std::vector<Point> garment_outline(Category c) {
  switch (c) {
    case Category::kSlingVest:
      return {{-0.08, 0.22}, {-0.055, 0.22}, {-0.04, 0.29}, {0.04, 0.29}, {0.055, 0.22},
              {0.08, 0.22},  {0.12, 0.33},   {0.11, 0.58},  {-0.11, 0.58}, {-0.12, 0.33}};
    case Category::kShortSleeve:
      return {{-0.05, 0.21}, {0.05, 0.21},  {0.13, 0.23},  {0.21, 0.33},  {0.16, 0.37},  {0.12, 0.32},
              {0.12, 0.58},  {-0.12, 0.58}, {-0.12, 0.32}, {-0.16, 0.37}, {-0.21, 0.33}, {-0.13, 0.23}};
    case Category::kLongSleeve:
      return {{-0.05, 0.21}, {0.05, 0.21},  {0.13, 0.23},  {0.24, 0.57},  {0.17, 0.6},   {0.12, 0.34},
              {0.12, 0.58},  {-0.12, 0.58}, {-0.12, 0.34}, {-0.17, 0.6},  {-0.24, 0.57}, {-0.13, 0.23}};
    case Category::kPants:
      return {{-0.11, 0.54}, {0.11, 0.54}, {0.14, 0.93}, {0.04, 0.93}, {0.0, 0.67}, {-0.04, 0.93}, {-0.14, 0.93}};
    case Category::kSkirt:
      return {{-0.1, 0.54}, {0.1, 0.54}, {0.19, 0.8}, {-0.19, 0.8}};
  }
  return {};
}

// Plain garments worn on the half of the body that is not being replaced.
std::vector<Point> generic_upper_outline() {
  return {{-0.05, 0.21}, {0.05, 0.21},  {0.13, 0.23},  {0.19, 0.31},  {0.15, 0.34},  {0.12, 0.31},
          {0.12, 0.57},  {-0.12, 0.57}, {-0.12, 0.31}, {-0.15, 0.34}, {-0.19, 0.31}, {-0.13, 0.23}};
}
std::vector<Point> generic_lower_outline() {
  return {{-0.11, 0.55}, {0.11, 0.55}, {0.13, 0.78}, {0.03, 0.78}, {0.0, 0.65}, {-0.03, 0.78}, {-0.13, 0.78}};
}

// source = centre + M (target - centre) + t
struct AffineMap {
  double m00 = 1, m01 = 0, m10 = 0, m11 = 1, tx = 0, ty = 0, cx = 0, cy = 0;

  Point to_source(const Point& p) const {
    const double dx = p[0] - cx, dy = p[1] - cy;
    return {cx + m00 * dx + m01 * dy + tx, cy + m10 * dx + m11 * dy + ty};
  }
  Point to_target(const Point& s) const {
    const double det = m00 * m11 - m01 * m10;
    const double dx = s[0] - cx - tx, dy = s[1] - cy - ty;
    return {cx + (m11 * dx - m01 * dy) / det, cy + (-m10 * dx + m00 * dy) / det};
  }
};

class SceneBuilder {
 public:
  SceneBuilder(Category category, uint64_t index, uint64_t seed, const Resolution& res)
      : category_(category), index_(index), res_(res), rng_(seed) {
    record_.category = category;
    record_.index = index;
    record_.seed = seed;
    record_.resolution = res;
    record_.id = std::string(category_name(category)) + "-" + std::to_string(index);
    unit_ = static_cast<double>(res.height);
    px_scale_ = static_cast<double>(res.height) / kReferenceHeight;
  }

  // Returns false when the sampled deformation folds over.
  bool build(ScenePrimitives& out) {
    sample_palette();
    const auto family = deformation_family(category_);
    sample_affine(family);
    auto flow = build_flow(family);
    if (!is_bijective(flow)) return false;

    auto garment_mask = rasterize_garment();
    auto garment = render_texture(garment_mask);
    auto mask_f = garment_mask.to(torch::kFloat32).unsqueeze(0);
    auto target = (grid_warp(mask_f, flow.unsqueeze(0)) >= 0.5).squeeze(0).squeeze(0);

    place_keypoints();
    auto parsing = draw_parsing(target, family);

    out.record = record_;
    out.garment = garment;
    out.garment_mask = garment_mask;
    out.flow = flow;
    out.parsing = parsing;
    return true;
  }

 private:
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  Rgb random_rgb(double lo, double hi) {
    return {static_cast<float>(uniform(lo, hi)), static_cast<float>(uniform(lo, hi)),
            static_cast<float>(uniform(lo, hi))};
  }

  Point body_to_pixel(const Point& p) const {
    return {static_cast<double>(res_.width) / 2.0 + p[0] * unit_, p[1] * unit_};
  }
  // Body-frame landmark drawn on the person canvas (target frame).
  cv::Point target_point(const Point& body) const {
    auto t = affine_.to_target(body_to_pixel(body));
    return {static_cast<int>(std::lround(t[0])), static_cast<int>(std::lround(t[1]))};
  }

  void sample_palette() {
    static constexpr Rgb kSkinTones[] = {{0.96f, 0.8f, 0.69f}, {0.87f, 0.67f, 0.52f}, {0.68f, 0.48f, 0.35f},
                                         {0.45f, 0.31f, 0.22f}};
    record_.background = random_rgb(0.55, 0.95);
    record_.skin = kSkinTones[std::uniform_int_distribution<int>(0, 3)(rng_)];
    record_.hair = random_rgb(0.05, 0.3);
    record_.other_garment = random_rgb(0.1, 0.9);
    record_.shoes = random_rgb(0.05, 0.25);
  }

  void sample_affine(const DeformationFamily& family) {
    const double angle = uniform(-family.max_rotation_deg, family.max_rotation_deg);
    const double scale = uniform(family.min_scale, family.max_scale);
    const double t = family.max_translation_px * px_scale_;
    const double rad = angle * std::numbers::pi / 180.0;
    affine_.m00 = scale * std::cos(rad);
    affine_.m01 = -scale * std::sin(rad);
    affine_.m10 = scale * std::sin(rad);
    affine_.m11 = scale * std::cos(rad);
    affine_.tx = uniform(-t, t);
    affine_.ty = uniform(-t, t);
    affine_.cx = (static_cast<double>(res_.width) - 1.0) / 2.0;
    affine_.cy = (static_cast<double>(res_.height) - 1.0) / 2.0;
    record_.rotation_deg = angle;
    record_.scale = scale;
    record_.translation_x = affine_.tx;
    record_.translation_y = affine_.ty;
  }

  // Backward flow (target -> flat garment) = affine part + elastic field
  // bilinearly interpolated from an n x n control grid spanning the canvas.
  Tensor build_flow(const DeformationFamily& family) {
    const auto h = res_.height, w = res_.width;
    auto opts = torch::TensorOptions().dtype(torch::kFloat64);
    auto xs = torch::arange(w, opts).view({1, w}).expand({h, w});
    auto ys = torch::arange(h, opts).view({h, 1}).expand({h, w});
    auto dx = xs - affine_.cx;
    auto dy = ys - affine_.cy;
    auto fx = affine_.cx + affine_.m00 * dx + affine_.m01 * dy + affine_.tx - xs;
    auto fy = affine_.cy + affine_.m10 * dx + affine_.m11 * dy + affine_.ty - ys;
    auto flow = torch::stack({fx, fy});
    if (family.control_points > 0) {
      const int n = family.control_points;
      const double amp = family.elastic_amplitude_px * px_scale_;
      auto ctrl = torch::empty({1, 2, n, n}, opts);
      auto acc = ctrl.accessor<double, 4>();
      for (int c = 0; c < 2; ++c)
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j) acc[0][c][i][j] = uniform(-amp, amp);
      namespace F = torch::nn::functional;
      auto field = F::interpolate(ctrl, F::InterpolateFuncOptions()
                                            .size(std::vector<int64_t>{h, w})
                                            .mode(torch::kBilinear)
                                            .align_corners(true));
      flow = flow + field.squeeze(0);
    }
    return flow.to(torch::kFloat32).contiguous();
  }

  // det(I + grad F) > 0 everywhere on the canvas (forward differences).
  static bool is_bijective(const Tensor& flow) {
    using torch::indexing::None;
    using torch::indexing::Slice;
    auto f = flow.to(torch::kFloat64);
    auto ddx = f.index({Slice(), Slice(None, -1), Slice(1, None)}) - f.index({Slice(), Slice(None, -1), Slice(None, -1)});
    auto ddy = f.index({Slice(), Slice(1, None), Slice(None, -1)}) - f.index({Slice(), Slice(None, -1), Slice(None, -1)});
    auto det = (1 + ddx[0]) * (1 + ddy[1]) - ddy[0] * ddx[1];
    return det.min().item<double>() > 0.0;
  }

  std::vector<cv::Point> polygon(const std::vector<Point>& outline, bool target_frame) const {
    std::vector<cv::Point> pts;
    for (const auto& p : outline) {
      if (target_frame) {
        pts.push_back(target_point(p));
      } else {
        auto q = body_to_pixel(p);
        pts.emplace_back(static_cast<int>(std::lround(q[0])), static_cast<int>(std::lround(q[1])));
      }
    }
    return pts;
  }

  Tensor rasterize_garment() const {
    cv::Mat mask(static_cast<int>(res_.height), static_cast<int>(res_.width), CV_8U, cv::Scalar(0));
    std::vector<std::vector<cv::Point>> polys{polygon(garment_outline(category_), false)};
    cv::fillPoly(mask, polys, cv::Scalar(1));
    return torch::from_blob(mask.data, {1, res_.height, res_.width}, torch::kUInt8).clone();
  }

  // Multi-frequency procedural texture on a white background, quantised to 8 bits.
  Tensor render_texture(const Tensor& mask) {
    const auto h = res_.height, w = res_.width;
    auto opts = torch::TensorOptions().dtype(torch::kFloat64);
    auto xs = torch::arange(w, opts).view({1, w}).expand({h, w});
    auto ys = torch::arange(h, opts).view({h, 1}).expand({h, w});
    const Rgb c1 = random_rgb(0.05, 0.95);
    const Rgb c2 = random_rgb(0.05, 0.95);
    Tensor mix;
    const int kind = std::uniform_int_distribution<int>(0, 2)(rng_);
    if (kind == 0) {
      const double angle = uniform(0.0, std::numbers::pi);
      const double period = uniform(4.0, 12.0) * px_scale_;
      mix = 0.5 + 0.5 * torch::sin(2 * std::numbers::pi * (xs * std::cos(angle) + ys * std::sin(angle)) / period);
    } else if (kind == 1) {
      const double cell = uniform(4.0, 10.0) * px_scale_;
      mix = (torch::floor(xs / cell) + torch::floor(ys / cell)).remainder(2.0);
    } else {
      const int64_t gh = std::max<int64_t>(2, h / 8), gw = std::max<int64_t>(2, w / 8);
      auto coarse = torch::empty({1, 1, gh, gw}, opts);
      auto acc = coarse.accessor<double, 4>();
      for (int64_t i = 0; i < gh; ++i)
        for (int64_t j = 0; j < gw; ++j) acc[0][0][i][j] = uniform(0.0, 1.0);
      mix = bilinear_resize(coarse, h, w).squeeze(0).squeeze(0);
    }
    // Low-amplitude second frequency so every texture has fine structure.
    const double fine = uniform(2.5, 5.0) * px_scale_;
    auto detail = 0.08 * torch::sin(2 * std::numbers::pi * xs / fine) * torch::sin(2 * std::numbers::pi * ys / fine);
    std::array<Tensor, 3> channels;
    const float a[3] = {c1.r, c1.g, c1.b};
    const float b[3] = {c2.r, c2.g, c2.b};
    for (int c = 0; c < 3; ++c) channels[c] = (a[c] * (1 - mix) + b[c] * mix + detail).clamp(0.0, 1.0);
    auto tex = torch::stack({channels[0], channels[1], channels[2]});
    auto m = mask.to(torch::kFloat64);
    auto img = tex * m + (1 - m);
    return torch::round(img * 255.0).to(torch::kUInt8).contiguous();
  }

  void place_keypoints() {
    for (int k = 0; k < kPoseKeypoints; ++k) {
      Point p = kKeypointTemplate[k];
      const double jitter = (k == 3 || k == 4 || k == 6 || k == 7) ? 0.03 : 0.01;
      p[0] += uniform(-jitter, jitter);
      p[1] += uniform(-jitter, jitter);
      body_points_[k] = p;
      auto t = affine_.to_target(body_to_pixel(p));
      const bool visible = t[0] >= 0 && t[1] >= 0 && t[0] <= res_.width - 1 && t[1] <= res_.height - 1;
      record_.keypoints[k] = {static_cast<float>(t[0]), static_cast<float>(t[1]), visible ? 1.0f : 0.0f};
    }
  }

  cv::Point body_kp(int k) const { return target_point(body_points_[k]); }

  Tensor draw_parsing(const Tensor& target, const DeformationFamily& family) {
    const int h = static_cast<int>(res_.height), w = static_cast<int>(res_.width);
    cv::Mat labels(h, w, CV_8U, cv::Scalar(kBackground));
    const double scale = 1.0 / std::max(record_.scale, 1e-3);
    auto thick = [&](double body_units) { return std::max(1, static_cast<int>(std::lround(body_units * unit_ * scale))); };

    // legs and shoes
    const int leg = thick(0.08);
    cv::line(labels, body_kp(8), body_kp(9), cv::Scalar(kLegs), leg);
    cv::line(labels, body_kp(9), body_kp(10), cv::Scalar(kLegs), leg);
    cv::line(labels, body_kp(11), body_kp(12), cv::Scalar(kLegs), leg);
    cv::line(labels, body_kp(12), body_kp(13), cv::Scalar(kLegs), leg);
    const cv::Size shoe(thick(0.05), thick(0.025));
    cv::ellipse(labels, body_kp(10), shoe, record_.rotation_deg, 0, 360, cv::Scalar(kShoes), cv::FILLED);
    cv::ellipse(labels, body_kp(13), shoe, record_.rotation_deg, 0, 360, cv::Scalar(kShoes), cv::FILLED);

    const bool upper = is_upper_body(category_);
    auto target_mat = target.to(torch::kUInt8).contiguous();
    cv::Mat target_cv(h, w, CV_8U, target_mat.data_ptr<uint8_t>());
    if (upper) {
      std::vector<std::vector<cv::Point>> lower{polygon(generic_lower_outline(), true)};
      cv::fillPoly(labels, lower, cv::Scalar(kLowerGarment));
    }
    // arms and neck
    const int arm = thick(0.06);
    cv::line(labels, body_kp(2), body_kp(3), cv::Scalar(kArms), arm);
    cv::line(labels, body_kp(3), body_kp(4), cv::Scalar(kArms), arm);
    cv::line(labels, body_kp(5), body_kp(6), cv::Scalar(kArms), arm);
    cv::line(labels, body_kp(6), body_kp(7), cv::Scalar(kArms), arm);
    cv::line(labels, target_point({0.0, 0.17}), target_point({0.0, 0.24}), cv::Scalar(kNeck), thick(0.06));
    // head, under the garment so the target region stays intact
    const cv::Point head = target_point({0.0, 0.11});
    cv::circle(labels, head, thick(0.08), cv::Scalar(kHead), cv::FILLED);
    record_.head_split_row = static_cast<float>(head.y);
    if (upper) {
      labels.setTo(cv::Scalar(kUpperGarment), target_cv);
    } else {
      std::vector<std::vector<cv::Point>> top{polygon(generic_upper_outline(), true)};
      cv::fillPoly(labels, top, cv::Scalar(kUpperGarment));
      labels.setTo(cv::Scalar(kLowerGarment), target_cv);
    }

    if (family.max_occluded_fraction > 0.0) add_occluder(labels, target_cv, family.max_occluded_fraction);
    return torch::from_blob(labels.data, {1, h, w}, torch::kUInt8).clone();
  }

  // A forearm crossing the garment, covering at most `max_fraction` of it.
  void add_occluder(cv::Mat& labels, const cv::Mat& target, double max_fraction) {
    const cv::Rect box = cv::boundingRect(target);
    const double area = cv::countNonZero(target);
    if (box.area() == 0 || area == 0) return;
    const int bar = std::max(2, static_cast<int>(std::lround(0.05 * unit_)));
    const int y0 = box.y + static_cast<int>(uniform(0.3, 0.7) * box.height) - bar / 2;
    int width = static_cast<int>(uniform(0.3, 0.6) * box.width);
    const bool from_left = uniform(0.0, 1.0) < 0.5;
    cv::Rect rect;
    for (;; width = static_cast<int>(width * 0.9)) {
      const int x0 = from_left ? box.x : box.x + box.width - width;
      rect = cv::Rect(x0, y0, std::max(width, 1), bar) & cv::Rect(0, 0, labels.cols, labels.rows);
      const double covered = cv::countNonZero(target(rect));
      if (covered <= max_fraction * area || width <= 1) break;
    }
    if (rect.area() == 0) return;
    labels(rect).setTo(cv::Scalar(kArms));
    record_.occluder = std::array<int, 4>{rect.x, rect.y, rect.x + rect.width, rect.y + rect.height};
  }

  Category category_;
  uint64_t index_;
  Resolution res_;
  Rng rng_;
  SceneRecord record_;
  AffineMap affine_;
  double unit_ = 96;
  double px_scale_ = 1;
  std::array<Point, kPoseKeypoints> body_points_{};
};

// ---- batch derivation ----------------------------------------------------

Tensor gaussian_blur(const Tensor& x, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3 * sigma)));
  auto t = torch::arange(-radius, radius + 1, torch::kFloat32);
  auto g = torch::exp(-(t * t) / (2 * sigma * sigma));
  g = g / g.sum();
  namespace F = torch::nn::functional;
  auto kx = g.view({1, 1, 1, -1});
  auto ky = g.view({1, 1, -1, 1});
  auto y = F::conv2d(x, kx, F::Conv2dFuncOptions().padding(torch::IntArrayRef{0, radius}));
  return F::conv2d(y, ky, F::Conv2dFuncOptions().padding(torch::IntArrayRef{radius, 0}));
}

json rgb_json(const Rgb& c) { return json::array({c.r, c.g, c.b}); }
Rgb rgb_from(const json& j) { return {j.at(0).get<float>(), j.at(1).get<float>(), j.at(2).get<float>()}; }

json record_to_json(const SceneRecord& r) {
  json j;
  j["id"] = r.id;
  j["category"] = category_name(r.category);
  j["index"] = r.index;
  j["seed"] = r.seed;
  j["resolution"] = r.resolution.str();
  j["keypoints"] = r.keypoints;
  j["palette"] = {{"background", rgb_json(r.background)}, {"skin", rgb_json(r.skin)},
                  {"hair", rgb_json(r.hair)},             {"other_garment", rgb_json(r.other_garment)},
                  {"shoes", rgb_json(r.shoes)}};
  j["head_split_row"] = r.head_split_row;
  j["affine"] = {{"rotation_deg", r.rotation_deg},
                 {"scale", r.scale},
                 {"translation", {r.translation_x, r.translation_y}}};
  j["occluder"] = r.occluder ? json(*r.occluder) : json(nullptr);
  j["files"] = {{"garment", "garment.png"},   {"garment_mask", "garment_mask.png"}, {"parsing", "parsing.png"},
                {"flow", "flow.wflo"},        {"person_preview", "person.png"},    {"warped_preview", "warped_garment.png"}};
  return j;
}

SceneRecord record_from_json(const json& j) {
  SceneRecord r;
  r.id = j.at("id").get<std::string>();
  r.category = parse_category(j.at("category").get<std::string>());
  r.index = j.at("index").get<uint64_t>();
  r.seed = j.at("seed").get<uint64_t>();
  r.resolution = Resolution::parse(j.at("resolution").get<std::string>());
  r.keypoints = j.at("keypoints").get<decltype(r.keypoints)>();
  const auto& p = j.at("palette");
  r.background = rgb_from(p.at("background"));
  r.skin = rgb_from(p.at("skin"));
  r.hair = rgb_from(p.at("hair"));
  r.other_garment = rgb_from(p.at("other_garment"));
  r.shoes = rgb_from(p.at("shoes"));
  r.head_split_row = j.at("head_split_row").get<float>();
  r.rotation_deg = j.at("affine").at("rotation_deg").get<double>();
  r.scale = j.at("affine").at("scale").get<double>();
  r.translation_x = j.at("affine").at("translation").at(0).get<double>();
  r.translation_y = j.at("affine").at("translation").at(1).get<double>();
  if (!j.at("occluder").is_null()) r.occluder = j.at("occluder").get<std::array<int, 4>>();
  return r;
}

// CHW float [0,1] or uint8 -> 8-bit BGR / gray PNG
void write_png(const fs::path& path, const Tensor& chw) {
  auto t = chw.dtype() == torch::kUInt8 ? chw : torch::round(chw.clamp(0, 1) * 255).to(torch::kUInt8);
  t = t.contiguous();
  const int c = static_cast<int>(t.size(0)), h = static_cast<int>(t.size(1)), w = static_cast<int>(t.size(2));
  cv::Mat img;
  if (c == 1) {
    img = cv::Mat(h, w, CV_8U, t.data_ptr<uint8_t>()).clone();
  } else {
    auto hwc = t.flip(0).permute({1, 2, 0}).contiguous();  // RGB -> BGR
    img = cv::Mat(h, w, CV_8UC3, hwc.data_ptr<uint8_t>()).clone();
  }
  if (!cv::imwrite(path.string(), img)) throw IoError("failed to write " + path.string());
}

Tensor read_png(const fs::path& path, int channels) {
  cv::Mat img = cv::imread(path.string(), channels == 1 ? cv::IMREAD_GRAYSCALE : cv::IMREAD_COLOR);
  if (img.empty()) throw IoError("cannot read image " + path.string());
  auto t = torch::from_blob(img.data, {img.rows, img.cols, channels}, torch::kUInt8).clone();
  t = t.permute({2, 0, 1});
  if (channels == 3) t = t.flip(0);
  return t.contiguous();
}

}  // namespace

// ---- public ----------------------------------------------------------------

std::string Resolution::str() const { return std::to_string(height) + "x" + std::to_string(width); }

Resolution Resolution::parse(std::string_view text) {
  const auto x = text.find('x');
  try {
    if (x == std::string_view::npos) throw std::invalid_argument("no separator");
    std::size_t used_h = 0, used_w = 0;
    Resolution r;
    const std::string hs(text.substr(0, x)), ws(text.substr(x + 1));
    r.height = std::stoll(hs, &used_h);
    r.width = std::stoll(ws, &used_w);
    if (used_h != hs.size() || used_w != ws.size() || r.height <= 0 || r.width <= 0) {
      throw std::invalid_argument("bad extent");
    }
    return r;
  } catch (const std::exception&) {
    throw ConfigError("resolution must look like HxW with positive integers, got '" + std::string(text) + "'");
  }
}

void validate_resolution(const Resolution& res, int levels) {
  const int64_t unit = int64_t{1} << levels;
  if (res.height <= 0 || res.width <= 0 || res.height % unit != 0 || res.width % unit != 0) {
    throw ConfigError("resolution " + res.str() + " must be divisible by " + std::to_string(unit));
  }
}

DeformationFamily deformation_family(Category c) {
  DeformationFamily f;
  switch (c) {
    case Category::kSlingVest:
      break;
    case Category::kShortSleeve:
      f.control_points = 3;
      f.elastic_amplitude_px = 4.0;
      break;
    case Category::kPants:
    case Category::kSkirt:
      f.control_points = 4;
      f.elastic_amplitude_px = 6.0;
      break;
    case Category::kLongSleeve:
      f.control_points = 5;
      f.elastic_amplitude_px = 8.0;
      f.max_occluded_fraction = 0.15;
      break;
  }
  return f;
}

Dataset::Dataset(Resolution res, std::vector<ScenePrimitives> scenes) : res_(res), scenes_(std::move(scenes)) {}

Batch Dataset::batch(std::span<const std::size_t> indices) const {
  std::vector<const ScenePrimitives*> picked;
  picked.reserve(indices.size());
  for (auto i : indices) picked.push_back(&scenes_.at(i));
  return materialize(picked);
}

Batch Dataset::batch_range(std::size_t begin, std::size_t end) const {
  std::vector<std::size_t> idx;
  for (auto i = begin; i < std::min(end, scenes_.size()); ++i) idx.push_back(i);
  return batch(idx);
}

Dataset Dataset::filter(Category c) const {
  std::vector<ScenePrimitives> kept;
  for (const auto& s : scenes_) {
    if (s.record.category == c) kept.push_back(s);
  }
  return Dataset(res_, std::move(kept));
}

std::vector<std::string> Dataset::ids() const {
  std::vector<std::string> out;
  for (const auto& s : scenes_) out.push_back(s.record.id);
  return out;
}

std::vector<std::size_t> Dataset::count_by_category() const {
  std::vector<std::size_t> counts(kAllCategories.size(), 0);
  for (const auto& s : scenes_) ++counts[static_cast<std::size_t>(s.record.category)];
  return counts;
}

void Dataset::append(const Dataset& other) {
  if (!other.empty() && !empty() && !(other.res_ == res_)) throw ConfigError("cannot mix dataset resolutions");
  if (empty()) res_ = other.res_;
  scenes_.insert(scenes_.end(), other.scenes_.begin(), other.scenes_.end());
}

Batch materialize(std::span<const ScenePrimitives* const> scenes) {
  if (scenes.empty()) throw ConfigError("cannot materialise an empty batch");
  torch::NoGradGuard guard;
  const auto n = static_cast<int64_t>(scenes.size());
  const auto h = scenes[0]->record.resolution.height;
  const auto w = scenes[0]->record.resolution.width;

  std::vector<Tensor> garments, masks, flows, parsings;
  auto palette = torch::zeros({n, kParsingClasses, 3});
  auto partial_map = torch::zeros({n, kParsingClasses}, torch::kInt64);
  auto changed_map = torch::zeros({n, kParsingClasses});
  auto garment_label = torch::zeros({n}, torch::kInt64);
  auto kps = torch::zeros({n, kPoseKeypoints, 3});
  auto split_rows = torch::zeros({n});
  Batch b;
  for (int64_t i = 0; i < n; ++i) {
    const auto& s = *scenes[i];
    const auto& r = s.record;
    if (r.resolution.height != h || r.resolution.width != w) throw ConfigError("mixed resolutions in one batch");
    garments.push_back(s.garment);
    masks.push_back(s.garment_mask);
    flows.push_back(s.flow);
    parsings.push_back(s.parsing);
    auto set = [&](int label, const Rgb& c) {
      palette[i][label][0] = c.r;
      palette[i][label][1] = c.g;
      palette[i][label][2] = c.b;
    };
    set(kBackground, r.background);
    set(kHead, r.skin);
    set(kUpperGarment, r.other_garment);
    set(kLowerGarment, r.other_garment);
    set(kArms, r.skin);
    set(kLegs, r.skin);
    set(kNeck, r.skin);
    set(kShoes, r.shoes);
    const bool upper = is_upper_body(r.category);
    garment_label[i] = upper ? kUpperGarment : kLowerGarment;
    const std::array<int, 3> changed = upper ? std::array<int, 3>{kUpperGarment, kArms, kNeck}
                                             : std::array<int, 3>{kLowerGarment, kLegs, kShoes};
    const std::array<int, 3> partial{upper ? kPartialUpper : kPartialLower, kPartialLimbs, kPartialNeckOrShoes};
    for (int k = 0; k < 3; ++k) {
      changed_map[i][changed[k]] = 1.0;
      partial_map[i][changed[k]] = partial[k];
    }
    for (int k = 0; k < kPoseKeypoints; ++k)
      for (int c = 0; c < 3; ++c) kps[i][k][c] = r.keypoints[k][c];
    split_rows[i] = r.head_split_row;
    b.categories.push_back(r.category);
    b.ids.push_back(r.id);
  }

  b.garment = torch::stack(garments).to(torch::kFloat32) / 255.0;
  b.garment_mask = torch::stack(masks).to(torch::kFloat32);
  b.gt_flow = torch::stack(flows);
  auto labels = torch::stack(parsings).squeeze(1).to(torch::kInt64);  // (N,H,W)
  b.parsing_labels = labels;
  b.warped_garment = grid_warp(b.garment, b.gt_flow);

  auto batch_idx = torch::arange(n).view({n, 1, 1}).expand({n, h, w});
  b.target_mask = (labels == garment_label.view({n, 1, 1})).unsqueeze(1).to(torch::kFloat32);

  // Flat colours per label, then the hair/face split and the garment texture.
  auto colours = palette.index({batch_idx, labels}).permute({0, 3, 1, 2});  // (N,3,H,W)
  auto rows = torch::arange(h, torch::kFloat32).view({1, h, 1});
  auto hair_pixels = ((labels == kHead) & (rows < split_rows.view({n, 1, 1}))).unsqueeze(1).to(torch::kFloat32);
  std::vector<Tensor> hair_rgb;
  for (int64_t i = 0; i < n; ++i) {
    const auto& hc = scenes[i]->record.hair;
    hair_rgb.push_back(torch::tensor({hc.r, hc.g, hc.b}).view({3, 1, 1}));
  }
  auto hair = torch::stack(hair_rgb);
  colours = colours * (1 - hair_pixels) + hair * hair_pixels;
  b.person = colours * (1 - b.target_mask) + b.warped_garment * b.target_mask;

  auto changed = changed_map.index({batch_idx, labels}).unsqueeze(1);
  b.preserved = b.person * (1 - changed);
  b.partial_labels = partial_map.index({batch_idx, labels});
  b.parsing = torch::one_hot(labels, kParsingClasses).permute({0, 3, 1, 2}).to(torch::kFloat32);
  b.head = b.person * (labels == kHead).unsqueeze(1).to(torch::kFloat32);

  const double px = static_cast<double>(h) / kReferenceHeight;
  b.body_shape = gaussian_blur((labels != kBackground).unsqueeze(1).to(torch::kFloat32), 2.5 * px).clamp(0, 1);

  const double sigma = 2.0 * px;
  auto xs = torch::arange(w, torch::kFloat32).view({1, 1, 1, w});
  auto ys = torch::arange(h, torch::kFloat32).view({1, 1, h, 1});
  auto kx = kps.select(2, 0).view({n, kPoseKeypoints, 1, 1});
  auto ky = kps.select(2, 1).view({n, kPoseKeypoints, 1, 1});
  auto vis = kps.select(2, 2).view({n, kPoseKeypoints, 1, 1});
  b.pose = torch::exp(-((xs - kx).pow(2) + (ys - ky).pow(2)) / (2 * sigma * sigma)) * vis;
  return b;
}

Dataset generate(Category category, std::size_t count, const Resolution& res, uint64_t seed, uint64_t first_index) {
  validate_resolution(res, fusion_levels_for_height(res.height));
  std::vector<ScenePrimitives> scenes;
  scenes.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const uint64_t index = first_index + i;
    ScenePrimitives scene;
    for (uint64_t attempt = 0;; ++attempt) {
      SceneBuilder builder(category, index, scene_seed(seed, category, index, attempt), res);
      if (builder.build(scene)) break;
      if (attempt > 64) throw ConfigError("could not sample a bijective deformation for " + scene.record.id);
    }
    scenes.push_back(std::move(scene));
  }
  return Dataset(res, std::move(scenes));
}

Splits split(const Dataset& dataset, const SplitFractions& fractions, uint64_t seed) {
  const double sum = fractions.train + fractions.val + fractions.test;
  if (fractions.train < 0 || fractions.val < 0 || fractions.test < 0 || std::abs(sum - 1.0) > 1e-9) {
    throw ConfigError("split fractions must be non-negative and sum to 1");
  }
  std::vector<ScenePrimitives> train, val, test;
  for (Category c : kAllCategories) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      if (dataset.scene(i).record.category == c) idx.push_back(i);
    }
    Rng rng(splitmix64(seed ^ (static_cast<uint64_t>(c) + 1) * 0x1000193ULL));
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n = idx.size();
    const auto n_train = static_cast<std::size_t>(std::lround(fractions.train * static_cast<double>(n)));
    const auto n_val = std::min(n - n_train, static_cast<std::size_t>(std::lround(fractions.val * static_cast<double>(n))));
    for (std::size_t k = 0; k < n; ++k) {
      auto& dst = k < n_train ? train : (k < n_train + n_val ? val : test);
      dst.push_back(dataset.scene(idx[k]));
    }
  }
  return {Dataset(dataset.resolution(), std::move(train)), Dataset(dataset.resolution(), std::move(val)),
          Dataset(dataset.resolution(), std::move(test))};
}

Splits generate_splits(const DatasetLayout& layout, const Resolution& res, uint64_t seed) {
  const std::size_t per = layout.train_per_category + layout.val_per_category + layout.test_per_category;
  if (per == 0) throw ConfigError("dataset layout has no samples");
  Dataset all;
  for (Category c : kAllCategories) all.append(generate(c, per, res, seed));
  const double total = static_cast<double>(per);
  SplitFractions f{static_cast<double>(layout.train_per_category) / total,
                   static_cast<double>(layout.val_per_category) / total, 0.0};
  f.test = 1.0 - f.train - f.val;
  return split(all, f, seed);
}

void save_splits(const fs::path& root, const Splits& splits, uint64_t seed) {
  fs::create_directories(root);
  json manifest;
  manifest["schema_version"] = 1;
  manifest["generator_version"] = kGeneratorVersion;
  manifest["seed"] = seed;
  manifest["resolution"] = splits.train.resolution().str();
  manifest["channel_order"] = {
      {"garment.png", "RGB 8-bit flat garment C on white"},
      {"garment_mask.png", "8-bit, 255 inside the flat garment"},
      {"parsing.png", "8-bit labels: 0 background, 1 head, 2 upper garment, 3 lower garment, 4 arms, 5 legs, "
                      "6 neck, 7 shoes"},
      {"flow.wflo", "float32 backward flow, dx plane then dy plane, pixels"},
      {"partial_parsing", "derived: 0 unchanged, 1 upper garment, 2 lower garment, 3 arms|legs, 4 neck|shoes"}};
  const std::pair<const char*, const Dataset*> parts[] = {
      {"train", &splits.train}, {"val", &splits.val}, {"test", &splits.test}};
  for (const auto& [name, data] : parts) {
    json counts = json::object();
    json ids = json::array();
    const auto by_cat = data->count_by_category();
    for (Category c : kAllCategories) counts[std::string(category_name(c))] = by_cat[static_cast<std::size_t>(c)];
    for (std::size_t i = 0; i < data->size(); ++i) {
      const auto& s = data->scene(i);
      const auto dir = root / name / category_name(s.record.category) / s.record.id;
      fs::create_directories(dir);
      write_png(dir / "garment.png", s.garment);
      write_png(dir / "garment_mask.png", s.garment_mask * 255);
      write_png(dir / "parsing.png", s.parsing);
      write_flow(dir / "flow.wflo", FlowField(s.flow.unsqueeze(0)));
      std::ofstream(dir / "record.json") << record_to_json(s.record).dump(2) << '\n';
      const ScenePrimitives* one[] = {&s};
      auto b = materialize(one);
      write_png(dir / "person.png", b.person[0]);
      write_png(dir / "warped_garment.png", b.warped_garment[0]);
      ids.push_back(s.record.id);
    }
    manifest["splits"][name] = {{"counts", counts}, {"ids", ids}};
  }
  std::ofstream(root / "manifest.json") << manifest.dump(2) << '\n';
}

namespace {

json read_manifest(const fs::path& root) {
  std::ifstream in(root / "manifest.json");
  if (!in) throw MissingDependencyError("no dataset manifest at " + (root / "manifest.json").string() +
                                       " (run gen-data first)");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw IoError("malformed dataset manifest: " + std::string(e.what()));
  }
}

}  // namespace

std::vector<std::string> manifest_ids(const fs::path& root, std::string_view split_name) {
  const auto manifest = read_manifest(root);
  const std::string key(split_name);
  if (!manifest.at("splits").contains(key)) throw ConfigError("dataset has no split '" + key + "'");
  return manifest.at("splits").at(key).at("ids").get<std::vector<std::string>>();
}

Dataset load_split(const fs::path& root, std::string_view split_name) {
  const auto manifest = read_manifest(root);
  const auto res = Resolution::parse(manifest.at("resolution").get<std::string>());
  std::vector<ScenePrimitives> scenes;
  for (const auto& id : manifest_ids(root, split_name)) {
    const auto cat = id.substr(0, id.rfind('-'));
    const auto dir = root / std::string(split_name) / cat / id;
    std::ifstream rec(dir / "record.json");
    if (!rec) throw IoError("missing record for sample " + id + " in " + dir.string());
    ScenePrimitives s;
    s.record = record_from_json(json::parse(rec));
    s.garment = read_png(dir / "garment.png", 3);
    s.garment_mask = (read_png(dir / "garment_mask.png", 1) > 127).to(torch::kUInt8);
    s.parsing = read_png(dir / "parsing.png", 1);
    s.flow = read_flow(dir / "flow.wflo").values().squeeze(0);
    scenes.push_back(std::move(s));
  }
  return Dataset(res, std::move(scenes));
}

}  // namespace warpnas
