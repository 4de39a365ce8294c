#pragma once

// Domain types shared by every module: heatmaps, flaw boxes, score vectors,
// and the pixel-membership geometry that ties boxes to heatmap mass.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "flawmap/error.hpp"

namespace flawmap {

inline constexpr std::size_t kMaxHeatmapPixels = std::size_t{1} << 28;

// Row-major W x H grid of intensities in [0, 1].
//
// Values are stored as float so that the HMF container round-trips any
// heatmap bit-exactly; all reductions accumulate in double.
class Heatmap {
 public:
  Heatmap(std::size_t width, std::size_t height, float fill = 0.0F)
      : width_(width), height_(height) {
    check_dims(width, height);
    check_value(fill);
    values_.assign(width * height, fill);
  }

  Heatmap(std::size_t width, std::size_t height, std::vector<float> values)
      : width_(width), height_(height), values_(std::move(values)) {
    check_dims(width, height);
    if (values_.size() != width * height) {
      throw ValidationError("heatmap: expected " + std::to_string(width * height) +
                            " values, got " + std::to_string(values_.size()));
    }
    for (float v : values_) check_value(v);
  }

  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t size() const noexcept { return values_.size(); }
  std::span<const float> values() const noexcept { return values_; }

  float at(std::size_t x, std::size_t y) const { return values_.at(y * width_ + x); }

  void set(std::size_t x, std::size_t y, float v) {
    check_value(v);
    values_.at(y * width_ + x) = v;
  }

  bool same_shape(const Heatmap& other) const noexcept {
    return width_ == other.width_ && height_ == other.height_;
  }

  friend bool operator==(const Heatmap&, const Heatmap&) = default;

 private:
  static void check_dims(std::size_t width, std::size_t height) {
    if (width == 0 || height == 0) {
      throw ValidationError("heatmap: dimensions must be positive");
    }
    if (width > kMaxHeatmapPixels / height) {
      throw ValidationError("heatmap: dimensions " + std::to_string(width) + "x" +
                            std::to_string(height) + " exceed the pixel limit");
    }
  }

  static void check_value(float v) {
    if (!(v >= 0.0F && v <= 1.0F)) {
      throw ValidationError("heatmap: value " + std::to_string(v) + " outside [0, 1]");
    }
  }

  std::size_t width_;
  std::size_t height_;
  std::vector<float> values_;
};

// Axis-aligned region in continuous pixel coordinates, origin top-left.
struct BoundingBox {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

inline bool is_valid(const BoundingBox& b) noexcept {
  return std::isfinite(b.x1) && std::isfinite(b.y1) && std::isfinite(b.x2) &&
         std::isfinite(b.y2) && b.x2 > b.x1 && b.y2 > b.y1;
}

inline BoundingBox make_box(double x1, double y1, double x2, double y2) {
  BoundingBox b{x1, y1, x2, y2};
  if (!is_valid(b)) {
    throw ValidationError("box [" + std::to_string(x1) + "," + std::to_string(y1) + "," +
                          std::to_string(x2) + "," + std::to_string(y2) +
                          "] has nonpositive area");
  }
  return b;
}

// Clamps to [0, width] x [0, height]; a box left without area is an error.
inline BoundingBox clamp_box(const BoundingBox& b, std::size_t width, std::size_t height) {
  const auto w = static_cast<double>(width);
  const auto h = static_cast<double>(height);
  BoundingBox c{std::clamp(b.x1, 0.0, w), std::clamp(b.y1, 0.0, h), std::clamp(b.x2, 0.0, w),
                std::clamp(b.y2, 0.0, h)};
  if (!is_valid(c)) {
    throw ValidationError("box degenerates after clamping to " + std::to_string(width) + "x" +
                          std::to_string(height));
  }
  return c;
}

inline double box_area(const BoundingBox& b) noexcept { return (b.x2 - b.x1) * (b.y2 - b.y1); }

inline double box_iou(const BoundingBox& a, const BoundingBox& b) noexcept {
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = box_area(a) + box_area(b) - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

// Half-open index range [first, last) of pixels whose centers i + 0.5 fall in
// [lo, hi), restricted to [0, n).
inline std::pair<std::size_t, std::size_t> covered_pixel_range(double lo, double hi,
                                                               std::size_t n) noexcept {
  const double limit = static_cast<double>(n);
  const double first = std::clamp(std::ceil(lo - 0.5), 0.0, limit);
  const double last = std::clamp(std::ceil(hi - 0.5), 0.0, limit);
  if (last <= first) return {0, 0};
  return {static_cast<std::size_t>(first), static_cast<std::size_t>(last)};
}

inline std::size_t pixels_in_box(const BoundingBox& b, std::size_t width, std::size_t height) {
  const auto [x0, x1] = covered_pixel_range(b.x1, b.x2, width);
  const auto [y0, y1] = covered_pixel_range(b.y1, b.y2, height);
  return (x1 - x0) * (y1 - y0);
}

inline double total_mass(const Heatmap& h) noexcept {
  double sum = 0.0;
  for (float v : h.values()) sum += v;
  return sum;
}

// Blank iff total mass does not exceed the tolerance (0 means exactly blank).
inline bool is_blank(const Heatmap& h, double tolerance = 0.0) noexcept {
  return total_mass(h) <= tolerance;
}

inline double mass_in_box(const Heatmap& h, const BoundingBox& b) {
  const auto [x0, x1] = covered_pixel_range(b.x1, b.x2, h.width());
  const auto [y0, y1] = covered_pixel_range(b.y1, b.y2, h.height());
  const auto values = h.values();
  double sum = 0.0;
  for (std::size_t y = y0; y < y1; ++y) {
    for (std::size_t x = x0; x < x1; ++x) sum += values[y * h.width() + x];
  }
  return sum;
}

// Pixel i belongs to a box iff its center (i + 0.5, j + 0.5) satisfies
// x1 <= cx < x2 and y1 <= cy < y2. Each pixel is counted once however many
// boxes contain it.
inline std::vector<bool> union_mask(std::span<const BoundingBox> boxes, std::size_t width,
                                    std::size_t height) {
  std::vector<bool> mask(width * height, false);
  for (const auto& b : boxes) {
    const auto [x0, x1] = covered_pixel_range(b.x1, b.x2, width);
    const auto [y0, y1] = covered_pixel_range(b.y1, b.y2, height);
    for (std::size_t y = y0; y < y1; ++y) {
      for (std::size_t x = x0; x < x1; ++x) mask[y * width + x] = true;
    }
  }
  return mask;
}

inline double mass_in_region(const Heatmap& h, std::span<const BoundingBox> boxes) {
  const auto mask = union_mask(boxes, h.width(), h.height());
  const auto values = h.values();
  double sum = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (mask[i]) sum += values[i];
  }
  return sum;
}

inline constexpr std::array<std::string_view, 4> kScoreDimensions = {
    "alignment", "aesthetics", "plausibility", "overall"};

struct ScoreVector {
  double alignment = 0.0;
  double aesthetics = 0.0;
  double plausibility = 0.0;
  double overall = 0.0;

  std::array<double, 4> as_array() const noexcept {
    return {alignment, aesthetics, plausibility, overall};
  }

  static ScoreVector from_array(const std::array<double, 4>& a) noexcept {
    return {a[0], a[1], a[2], a[3]};
  }

  friend bool operator==(const ScoreVector&, const ScoreVector&) = default;
};

inline void validate_scores(const ScoreVector& s) {
  const auto values = s.as_array();
  for (std::size_t d = 0; d < values.size(); ++d) {
    if (!(values[d] >= 0.0 && values[d] <= 1.0)) {
      throw ValidationError("score '" + std::string(kScoreDimensions[d]) + "' = " +
                            std::to_string(values[d]) + " outside [0, 1]");
    }
  }
}

// One sample's scores, heatmaps and flaw boxes. Each box list is expressed
// in the coordinate frame of the heatmap of the same type.
struct EvaluationRecord {
  std::string id;
  ScoreVector scores;
  std::optional<Heatmap> artifact_heatmap;
  std::optional<Heatmap> misalignment_heatmap;
  std::vector<BoundingBox> artifact_boxes;
  std::vector<BoundingBox> misalignment_boxes;
};

}  // namespace flawmap
