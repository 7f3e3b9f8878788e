#pragma once

// Polygon masks, raster overlap measures and 2D shape descriptors.
//
// Conventions: origin top-left, x right, y down. A pixel (x, y) belongs to a
// mask iff its center (x + 0.5, y + 0.5) is inside the polygon under the
// even-odd rule. Bounding-box max edges are exclusive.

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "ipsc/error.hpp"

namespace ipsc {

struct Point {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

struct FrameSize {
  int width = 0;
  int height = 0;
  friend bool operator==(const FrameSize&, const FrameSize&) = default;
};

struct BBox {
  int x_min = 0;
  int y_min = 0;
  int x_max = 0;  // exclusive
  int y_max = 0;  // exclusive

  int width() const { return x_max - x_min; }
  int height() const { return y_max - y_min; }
  std::int64_t area() const { return std::int64_t{width()} * height(); }
  bool intersects(const BBox& o) const {
    return x_min < o.x_max && o.x_min < x_max && y_min < o.y_max && o.y_min < y_max;
  }
  friend bool operator==(const BBox&, const BBox&) = default;
};

class GeometryError : public Error {
 public:
  using Error::Error;
};

/// Horizontal run of pixels [x_begin, x_end) on row y.
struct Span {
  int y = 0;
  int x_begin = 0;
  int x_end = 0;
  int length() const { return x_end - x_begin; }
  friend bool operator==(const Span&, const Span&) = default;
};

/// Run-length raster. Spans are sorted by (y, x_begin) and never overlap.
class Raster {
 public:
  static Raster from_polygon(std::span<const Point> polygon, FrameSize frame);

  std::span<const Span> spans() const { return spans_; }
  /// Spans of row y (empty when y lies outside the raster).
  std::span<const Span> row(int y) const;
  std::int64_t area() const { return area_; }
  bool empty() const { return area_ == 0; }
  bool contains(int x, int y) const;
  int first_row() const { return first_row_; }
  int row_count() const { return static_cast<int>(row_offsets_.empty() ? 0 : row_offsets_.size() - 1); }

  friend bool operator==(const Raster& a, const Raster& b) { return a.spans_ == b.spans_; }

 private:
  std::vector<Span> spans_;
  std::vector<std::size_t> row_offsets_;
  int first_row_ = 0;
  std::int64_t area_ = 0;
};

/// Immutable polygon mask with its raster. Copies share the raster.
class Mask {
 public:
  Mask() = default;
  /// Validates the polygon (>= 3 vertices, simple, inside the frame) and
  /// rejects masks whose raster is empty.
  Mask(std::vector<Point> polygon, FrameSize frame);

  const std::vector<Point>& polygon() const { return polygon_; }
  FrameSize frame_size() const { return frame_; }
  const Raster& raster() const;
  std::int64_t area() const { return raster_ ? raster_->area() : 0; }
  const BBox& bbox() const { return bbox_; }
  Point centroid() const { return centroid_; }
  bool empty() const { return !raster_; }

  Mask translated(int dx, int dy) const;

  friend bool operator==(const Mask& a, const Mask& b) { return a.frame_ == b.frame_ && a.polygon_ == b.polygon_; }

 private:
  std::vector<Point> polygon_;
  FrameSize frame_{};
  std::shared_ptr<const Raster> raster_;
  BBox bbox_{};
  Point centroid_{};
};

/// Number of pixels shared by both rasters.
std::int64_t intersection_area(const Raster& a, const Raster& b);
std::int64_t intersection_area(const Mask& a, const Mask& b);

/// |A ∩ B| / |A ∪ B| on rasterized pixels. Throws on mismatched frame sizes.
double iou(const Mask& a, const Mask& b);

/// Mean pixel index (x, y) over the raster.
Point centroid(const Mask& m);

double polygon_perimeter(std::span<const Point> polygon);
/// Absolute shoelace area.
double polygon_area(std::span<const Point> polygon);
/// True when no two non-adjacent edges touch or cross.
bool is_simple_polygon(std::span<const Point> polygon);
/// Convex hull (counter-clockwise in math orientation, no collinear points).
std::vector<Point> convex_hull(std::vector<Point> points);

struct ShapeFeatures {
  double area = 0.0;          // px²
  double perimeter = 0.0;     // px, polygon outline
  double circularity = 0.0;   // 4π·area / perimeter²
  double eccentricity = 0.0;  // sqrt(1 - λmin/λmax) of the pixel covariance
  double solidity = 0.0;      // area / convex-hull area of the pixel squares
  double extent = 0.0;        // area / bbox area
  double aspect_ratio = 0.0;  // sqrt(λmax/λmin)
  friend bool operator==(const ShapeFeatures&, const ShapeFeatures&) = default;
};

struct FeatureColumn {
  std::string_view name;
  double ShapeFeatures::*member;
};

inline constexpr std::size_t kShapeFeatureCount = 7;

/// Column order used by feature tables and by shape_distance weights.
inline constexpr std::array<FeatureColumn, kShapeFeatureCount> kShapeFeatureColumns{{
    {"area", &ShapeFeatures::area},
    {"perimeter", &ShapeFeatures::perimeter},
    {"circularity", &ShapeFeatures::circularity},
    {"eccentricity", &ShapeFeatures::eccentricity},
    {"solidity", &ShapeFeatures::solidity},
    {"extent", &ShapeFeatures::extent},
    {"aspect_ratio", &ShapeFeatures::aspect_ratio},
}};

/// Throws GeometryError when the raster is collinear (degenerate second moments).
ShapeFeatures shape_features(const Mask& m);

/// Moves every side of the box outward by `border` pixels, clamped to the frame.
BBox dilate_bbox(const BBox& box, int border, FrameSize frame);

/// Weighted L2 over z-scored features: sqrt(Σ w_i ((a_i - b_i) / s_i)²).
struct ShapeMetric {
  std::array<double, kShapeFeatureCount> weights{1, 1, 1, 1, 1, 1, 1};
  std::array<double, kShapeFeatureCount> scales{1, 1, 1, 1, 1, 1, 1};

  /// Scales set to the population standard deviation of each feature
  /// (1 where the deviation vanishes).
  static ShapeMetric fit(std::span<const ShapeFeatures> population);
};

double shape_distance(const ShapeFeatures& a, const ShapeFeatures& b, const ShapeMetric& metric = {});

}  // namespace ipsc
