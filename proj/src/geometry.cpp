#include "ipsc/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace ipsc {

namespace {

double cross(const Point& o, const Point& a, const Point& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

int sign(double v) { return (v > 0.0) - (v < 0.0); }

bool on_segment(const Point& p, const Point& q, const Point& r) {
  return std::min(p.x, r.x) <= q.x && q.x <= std::max(p.x, r.x) && std::min(p.y, r.y) <= q.y &&
         q.y <= std::max(p.y, r.y);
}

bool segments_touch(const Point& p1, const Point& p2, const Point& q1, const Point& q2) {
  const int d1 = sign(cross(p1, p2, q1));
  const int d2 = sign(cross(p1, p2, q2));
  const int d3 = sign(cross(q1, q2, p1));
  const int d4 = sign(cross(q1, q2, p2));
  if (d1 != d2 && d3 != d4 && d1 != 0 && d2 != 0 && d3 != 0 && d4 != 0) return true;
  if (d1 == 0 && on_segment(p1, q1, p2)) return true;
  if (d2 == 0 && on_segment(p1, q2, p2)) return true;
  if (d3 == 0 && on_segment(q1, p1, q2)) return true;
  if (d4 == 0 && on_segment(q1, p2, q2)) return true;
  return false;
}

// Sum of x over [a, b).
std::int64_t sum_range(std::int64_t a, std::int64_t b) { return (a + b - 1) * (b - a) / 2; }

// Sum of x² over [a, b).
std::int64_t sum_squares_range(std::int64_t a, std::int64_t b) {
  auto upto = [](std::int64_t n) { return (n - 1) * n * (2 * n - 1) / 6; };  // Σ_{x<n} x², n >= 0
  if (a >= 0) return upto(b) - upto(a);
  // Negative coordinates never occur for in-frame masks; fall back to a loop.
  std::int64_t s = 0;
  for (std::int64_t x = a; x < b; ++x) s += x * x;
  return s;
}

struct Moments {
  double area = 0;
  double cx = 0;
  double cy = 0;
  double cxx = 0;  // central second moments (population)
  double cyy = 0;
  double cxy = 0;
};

Moments raster_moments(const Raster& r) {
  std::int64_t n = 0, sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (const Span& s : r.spans()) {
    const std::int64_t len = s.length();
    const std::int64_t rx = sum_range(s.x_begin, s.x_end);
    n += len;
    sx += rx;
    sy += len * s.y;
    sxx += sum_squares_range(s.x_begin, s.x_end);
    syy += len * s.y * s.y;
    sxy += rx * s.y;
  }
  Moments m;
  m.area = static_cast<double>(n);
  if (n == 0) return m;
  const double dn = static_cast<double>(n);
  m.cx = static_cast<double>(sx) / dn;
  m.cy = static_cast<double>(sy) / dn;
  m.cxx = static_cast<double>(sxx) / dn - m.cx * m.cx;
  m.cyy = static_cast<double>(syy) / dn - m.cy * m.cy;
  m.cxy = static_cast<double>(sxy) / dn - m.cx * m.cy;
  return m;
}

}  // namespace

Raster Raster::from_polygon(std::span<const Point> polygon, FrameSize frame) {
  Raster r;
  if (polygon.size() < 3) return r;
  double min_y = polygon[0].y, max_y = polygon[0].y;
  for (const Point& p : polygon) {
    min_y = std::min(min_y, p.y);
    max_y = std::max(max_y, p.y);
  }
  const int y_begin = std::max(0, static_cast<int>(std::floor(min_y - 0.5)));
  const int y_end = std::min(frame.height, static_cast<int>(std::ceil(max_y + 0.5)));

  std::vector<double> crossings;
  const std::size_t n = polygon.size();
  r.first_row_ = y_begin;
  r.row_offsets_.push_back(0);
  for (int y = y_begin; y < y_end; ++y) {
    const double yc = y + 0.5;
    crossings.clear();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
      const Point& p = polygon[i];
      const Point& q = polygon[j];
      if ((p.y > yc) != (q.y > yc)) crossings.push_back(p.x + (yc - p.y) * (q.x - p.x) / (q.y - p.y));
    }
    std::sort(crossings.begin(), crossings.end());
    for (std::size_t k = 0; k + 1 < crossings.size(); k += 2) {
      // Pixel x is inside iff crossings[k] <= x + 0.5 < crossings[k + 1].
      int xb = static_cast<int>(std::ceil(crossings[k] - 0.5));
      int xe = static_cast<int>(std::ceil(crossings[k + 1] - 0.5));
      xb = std::max(xb, 0);
      xe = std::min(xe, frame.width);
      if (xe <= xb) continue;
      if (!r.spans_.empty() && r.spans_.back().y == y && r.spans_.back().x_end >= xb) {
        r.spans_.back().x_end = std::max(r.spans_.back().x_end, xe);
      } else {
        r.spans_.push_back({y, xb, xe});
      }
    }
    r.row_offsets_.push_back(r.spans_.size());
  }
  for (const Span& s : r.spans_) r.area_ += s.length();
  return r;
}

std::span<const Span> Raster::row(int y) const {
  const int idx = y - first_row_;
  if (idx < 0 || idx >= row_count()) return {};
  return std::span<const Span>(spans_).subspan(row_offsets_[idx], row_offsets_[idx + 1] - row_offsets_[idx]);
}

bool Raster::contains(int x, int y) const {
  for (const Span& s : row(y))
    if (s.x_begin <= x && x < s.x_end) return true;
  return false;
}

Mask::Mask(std::vector<Point> polygon, FrameSize frame) : polygon_(std::move(polygon)), frame_(frame) {
  if (frame_.width <= 0 || frame_.height <= 0) throw GeometryError("mask: frame size must be positive");
  if (polygon_.size() < 3) throw GeometryError("mask: polygon needs at least 3 vertices");
  for (const Point& p : polygon_) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || p.x < 0.0 || p.y < 0.0 || p.x > frame_.width ||
        p.y > frame_.height) {
      std::ostringstream os;
      os << "mask: vertex (" << p.x << ", " << p.y << ") outside frame " << frame_.width << "x" << frame_.height;
      throw GeometryError(os.str());
    }
  }
  if (!is_simple_polygon(polygon_)) throw GeometryError("mask: polygon is self-intersecting");
  auto raster = std::make_shared<Raster>(Raster::from_polygon(polygon_, frame_));
  if (raster->empty()) throw GeometryError("mask: polygon covers no pixel centers (zero area)");

  const auto spans = raster->spans();
  bbox_ = {spans.front().x_begin, spans.front().y, spans.front().x_end, spans.back().y + 1};
  for (const Span& s : spans) {
    bbox_.x_min = std::min(bbox_.x_min, s.x_begin);
    bbox_.x_max = std::max(bbox_.x_max, s.x_end);
  }
  const Moments m = raster_moments(*raster);
  centroid_ = {m.cx, m.cy};
  raster_ = std::move(raster);
}

const Raster& Mask::raster() const {
  if (!raster_) throw GeometryError("mask: empty mask has no raster");
  return *raster_;
}

Mask Mask::translated(int dx, int dy) const {
  std::vector<Point> moved = polygon_;
  for (Point& p : moved) {
    p.x += dx;
    p.y += dy;
  }
  return Mask(std::move(moved), frame_);
}

std::int64_t intersection_area(const Raster& a, const Raster& b) {
  const int y0 = std::max(a.first_row(), b.first_row());
  const int y1 = std::min(a.first_row() + a.row_count(), b.first_row() + b.row_count());
  std::int64_t total = 0;
  for (int y = y0; y < y1; ++y) {
    const auto ra = a.row(y);
    const auto rb = b.row(y);
    std::size_t i = 0, j = 0;
    while (i < ra.size() && j < rb.size()) {
      const int lo = std::max(ra[i].x_begin, rb[j].x_begin);
      const int hi = std::min(ra[i].x_end, rb[j].x_end);
      if (hi > lo) total += hi - lo;
      if (ra[i].x_end < rb[j].x_end) {
        ++i;
      } else {
        ++j;
      }
    }
  }
  return total;
}

std::int64_t intersection_area(const Mask& a, const Mask& b) {
  if (a.empty() || b.empty()) return 0;
  if (!a.bbox().intersects(b.bbox())) return 0;
  return intersection_area(a.raster(), b.raster());
}

double iou(const Mask& a, const Mask& b) {
  if (a.frame_size() != b.frame_size()) throw GeometryError("iou: masks have different frame sizes");
  const std::int64_t inter = intersection_area(a, b);
  const std::int64_t uni = a.area() + b.area() - inter;
  if (uni == 0) return 0.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

Point centroid(const Mask& m) {
  if (m.empty()) throw GeometryError("centroid: empty mask");
  return m.centroid();
}

double polygon_perimeter(std::span<const Point> polygon) {
  double total = 0.0;
  const std::size_t n = polygon.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) total += std::hypot(polygon[i].x - polygon[j].x, polygon[i].y - polygon[j].y);
  return total;
}

double polygon_area(std::span<const Point> polygon) {
  double twice = 0.0;
  const std::size_t n = polygon.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) twice += polygon[j].x * polygon[i].y - polygon[i].x * polygon[j].y;
  return std::abs(twice) / 2.0;
}

bool is_simple_polygon(std::span<const Point> polygon) {
  const std::size_t n = polygon.size();
  if (n < 3) return false;
  for (std::size_t i = 0; i < n; ++i) {
    const Point& a1 = polygon[i];
    const Point& a2 = polygon[(i + 1) % n];
    for (std::size_t j = i + 2; j < n; ++j) {
      if (i == 0 && j == n - 1) continue;  // closing edge is adjacent to the first
      const Point& b1 = polygon[j];
      const Point& b2 = polygon[(j + 1) % n];
      if (segments_touch(a1, a2, b1, b2)) return false;
    }
  }
  return true;
}

std::vector<Point> convex_hull(std::vector<Point> pts) {
  std::sort(pts.begin(), pts.end(), [](const Point& a, const Point& b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return pts;
  std::vector<Point> hull(2 * pts.size());
  std::size_t k = 0;
  for (const Point& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

ShapeFeatures shape_features(const Mask& m) {
  const Raster& r = m.raster();
  const Moments mo = raster_moments(r);
  const double trace = mo.cxx + mo.cyy;
  const double disc = std::sqrt(std::max(0.0, (mo.cxx - mo.cyy) * (mo.cxx - mo.cyy) / 4.0 + mo.cxy * mo.cxy));
  const double lmax = trace / 2.0 + disc;
  const double lmin = trace / 2.0 - disc;
  if (!(lmin > 1e-9 * std::max(1.0, lmax))) throw GeometryError("shape_features: degenerate (collinear) raster");

  std::vector<Point> corners;
  corners.reserve(r.spans().size() * 4);
  for (const Span& s : r.spans()) {
    corners.push_back({static_cast<double>(s.x_begin), static_cast<double>(s.y)});
    corners.push_back({static_cast<double>(s.x_end), static_cast<double>(s.y)});
    corners.push_back({static_cast<double>(s.x_begin), static_cast<double>(s.y + 1)});
    corners.push_back({static_cast<double>(s.x_end), static_cast<double>(s.y + 1)});
  }
  const double hull_area = polygon_area(convex_hull(std::move(corners)));

  ShapeFeatures f;
  f.area = mo.area;
  f.perimeter = polygon_perimeter(m.polygon());
  f.circularity = 4.0 * std::numbers::pi * f.area / (f.perimeter * f.perimeter);
  f.eccentricity = std::sqrt(std::max(0.0, 1.0 - lmin / lmax));
  f.solidity = std::min(1.0, f.area / hull_area);
  f.extent = f.area / static_cast<double>(m.bbox().area());
  f.aspect_ratio = std::sqrt(lmax / lmin);
  return f;
}

BBox dilate_bbox(const BBox& box, int border, FrameSize frame) {
  return {std::max(0, box.x_min - border), std::max(0, box.y_min - border), std::min(frame.width, box.x_max + border),
          std::min(frame.height, box.y_max + border)};
}

ShapeMetric ShapeMetric::fit(std::span<const ShapeFeatures> population) {
  ShapeMetric metric;
  if (population.empty()) return metric;
  const double n = static_cast<double>(population.size());
  for (std::size_t c = 0; c < kShapeFeatureCount; ++c) {
    const auto member = kShapeFeatureColumns[c].member;
    double mean = 0.0;
    for (const auto& f : population) mean += f.*member;
    mean /= n;
    double var = 0.0;
    for (const auto& f : population) var += (f.*member - mean) * (f.*member - mean);
    const double sd = std::sqrt(var / n);
    metric.scales[c] = sd > 1e-12 ? sd : 1.0;
  }
  return metric;
}

double shape_distance(const ShapeFeatures& a, const ShapeFeatures& b, const ShapeMetric& metric) {
  double sum = 0.0;
  for (std::size_t c = 0; c < kShapeFeatureCount; ++c) {
    const auto member = kShapeFeatureColumns[c].member;
    const double z = (a.*member - b.*member) / metric.scales[c];
    sum += metric.weights[c] * z * z;
  }
  return std::sqrt(sum);
}

}  // namespace ipsc
