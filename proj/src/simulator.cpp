#include "ipsc/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <set>

namespace ipsc {

namespace {

using Rng = std::mt19937_64;
constexpr int kOutlineVertices = 48;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

void check_prob(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0)) throw Error(std::string("simulator: ") + name + " must lie in [0, 1]");
}

bool chance(Rng& rng, double p) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p; }

double uniform(Rng& rng, double lo, double hi) {
  return lo == hi ? lo : std::uniform_real_distribution<double>(lo, hi)(rng);
}

int poisson(Rng& rng, double mean) { return mean > 0.0 ? std::poisson_distribution<int>(mean)(rng) : 0; }

double truncated_normal(Rng& rng, double sigma) {
  if (sigma <= 0.0) return 0.0;
  std::normal_distribution<double> n(0.0, sigma);
  for (;;) {
    const double v = n(rng);
    if (std::abs(v) <= 2.5 * sigma) return v;
  }
}

double round2(double v) { return std::round(v * 100.0) / 100.0; }

// Periodic Catmull-Rom interpolation of knot values at angle phi.
double interpolate(const std::vector<double>& knots, double phi) {
  const int k = static_cast<int>(knots.size());
  const double t = phi / kTwoPi * k;
  const int i = static_cast<int>(std::floor(t));
  const double u = t - i;
  auto at = [&](int j) { return knots[static_cast<std::size_t>(((j % k) + k) % k)]; };
  const double p0 = at(i - 1), p1 = at(i), p2 = at(i + 1), p3 = at(i + 2);
  return 0.5 * ((2 * p1) + (-p0 + p2) * u + (2 * p0 - 5 * p1 + 4 * p2 - p3) * u * u +
                (-p0 + 3 * p1 - 3 * p2 + p3) * u * u * u);
}

// One simulated cell. `a` is the semi-axis along `theta`, `b` across it.
struct Body {
  std::uint64_t key = 0;  // stable across frames, unlike the instance id
  CellId id;
  Point c;
  double a = 0, b = 0, theta = 0;
  std::vector<double> profile;
  std::optional<std::uint64_t> partner;  // approaching fusion partner
  Mask mask;

  double major() const { return std::max(a, b); }
  double minor() const { return std::min(a, b); }
  double area() const { return std::numbers::pi * a * b; }
  double radius() const { return std::sqrt(a * b); }
};

class Generator {
 public:
  explicit Generator(const ScenarioConfig& cfg) : cfg_(cfg), rng_(cfg.rng_seed) {}

  Scenario run();

 private:
  double reach(double a, double b) const { return std::max(a, b) * (1.0 + cfg_.boundary_noise) + 1.0; }

  bool inside_margins(const Point& c, double a, double b) const {
    const double r = reach(a, b);
    return c.x >= r && c.y >= r && c.x <= cfg_.frame_size.width - r && c.y <= cfg_.frame_size.height - r;
  }

  std::vector<double> draw_profile() {
    std::vector<double> p(static_cast<std::size_t>(cfg_.control_points));
    for (double& v : p) v = uniform(rng_, -cfg_.boundary_noise, cfg_.boundary_noise);
    return p;
  }

  Mask outline(const Point& c, double a, double b, double theta, const std::vector<double>& profile) const {
    std::vector<Point> pts;
    pts.reserve(kOutlineVertices);
    const double ct = std::cos(theta), st = std::sin(theta);
    for (int m = 0; m < kOutlineVertices; ++m) {
      const double phi = kTwoPi * m / kOutlineVertices;
      const double re = a * b / std::hypot(b * std::cos(phi), a * std::sin(phi));
      const double r = re * (1.0 + interpolate(profile, phi));
      const double lx = r * std::cos(phi), ly = r * std::sin(phi);
      const double x = std::clamp(round2(c.x + ct * lx - st * ly), 0.0, double(cfg_.frame_size.width));
      const double y = std::clamp(round2(c.y + st * lx + ct * ly), 0.0, double(cfg_.frame_size.height));
      pts.push_back({x, y});
    }
    return Mask(std::move(pts), cfg_.frame_size);
  }

  // Copy of `src` in the next frame with new geometry (same key and profile).
  Body moved(const Body& src, const Point& c, double a, double b) const {
    Body body = src;
    body.c = c;
    body.a = a;
    body.b = b;
    body.mask = outline(c, a, b, src.theta, src.profile);
    return body;
  }

  static std::int64_t overlap(const Mask& x, const Mask& y) {
    return x.bbox().intersects(y.bbox()) ? intersection_area(x, y) : 0;
  }

  Body random_body() {
    const double a = uniform(rng_, cfg_.radius_min, cfg_.radius_max);
    const double b = a * uniform(rng_, cfg_.aspect_min, 1.0);
    const double theta = uniform(rng_, 0.0, std::numbers::pi);
    const double r = reach(a, b);
    const Point c{uniform(rng_, r, cfg_.frame_size.width - r), uniform(rng_, r, cfg_.frame_size.height - r)};
    auto profile = draw_profile();
    Body body;
    body.c = c;
    body.a = a;
    body.b = b;
    body.theta = theta;
    body.profile = std::move(profile);
    return body;
  }

  CellId record(Body& body, FrameIndex frame) {
    body.id = CellId{next_id_++};
    CellInstance inst;
    inst.id = body.id;
    inst.frame = frame;
    inst.roi = cfg_.roi;
    inst.mask = body.mask;
    cells_.push_back(std::move(inst));
    return body.id;
  }

  void place_initial();
  std::vector<Body> step(std::vector<Body> cur, FrameIndex later);
  void assign_labels(Scenario& s);

  const ScenarioConfig& cfg_;
  Rng rng_;
  std::uint64_t next_key_ = 1;
  std::uint64_t next_id_ = 1;
  std::vector<CellInstance> cells_;
  std::vector<Edge> edges_;
  std::vector<TrackEvent> events_;
  TrialCounts trials_;
  std::vector<Body> bodies_;
};

void Generator::place_initial() {
  const int budget = 1000 * std::max(1, cfg_.initial_cells);
  int attempts = 0;
  while (static_cast<int>(bodies_.size()) < cfg_.initial_cells) {
    if (++attempts > budget)
      throw Error("simulator: cannot pack " + std::to_string(cfg_.initial_cells) + " cells into a " +
                  std::to_string(cfg_.frame_size.width) + "x" + std::to_string(cfg_.frame_size.height) + " frame");
    Body cand = random_body();
    // Keep a few pixels between bounding circles so nothing starts out touching.
    const bool clear = std::all_of(bodies_.begin(), bodies_.end(), [&](const Body& o) {
      return std::hypot(cand.c.x - o.c.x, cand.c.y - o.c.y) >= reach(cand.a, cand.b) + reach(o.a, o.b) + 3.0;
    });
    if (!clear) continue;
    cand.key = next_key_++;
    cand.mask = outline(cand.c, cand.a, cand.b, cand.theta, cand.profile);
    bodies_.push_back(std::move(cand));
  }
}

std::vector<Body> Generator::step(std::vector<Body> cur, FrameIndex later) {
  const double growth = std::sqrt(cfg_.growth_rate);
  const double size_cap = 2.5 * cfg_.radius_max;
  std::vector<Body> next;
  std::set<std::uint64_t> done;  // keys already handled this step
  std::map<std::uint64_t, const Body*> by_key;
  for (const Body& b : cur) by_key[b.key] = &b;

  // Fits next to everything placed so far and everything not yet processed,
  // never overlapping more than `old` did.
  auto fits = [&](const Mask& m, const Body* old, std::initializer_list<std::uint64_t> ignore) {
    for (const Body& n : next)
      if (overlap(m, n.mask) > (old ? overlap(old->mask, n.mask) : 0)) return false;
    for (const Body& o : cur) {
      if (done.count(o.key) || (old && o.key == old->key)) continue;
      if (std::find(ignore.begin(), ignore.end(), o.key) != ignore.end()) continue;
      if (overlap(m, o.mask) > (old ? overlap(old->mask, o.mask) : 0)) return false;
    }
    return true;
  };
  auto continue_as = [&](const Body& from, Body to) {
    const CellId prev = from.id;
    const CellId now = record(to, later);
    edges_.push_back({prev, now, EdgeKind::Continuation});
    events_.push_back({EventKind::Continuation, later, {prev}, {now}});
    done.insert(from.key);
    next.push_back(std::move(to));
  };
  std::size_t population = cur.size();

  for (const Body& b : cur) {
    if (b.partner) continue;
    ++trials_.disappearance_trials;
    if (!chance(rng_, cfg_.disappearance_prob)) continue;
    ++trials_.disappearances;
    events_.push_back({EventKind::Disappearance, later, {b.id}, {}});
    done.insert(b.key);
    --population;
  }

  for (const Body& b : cur) {
    if (b.partner || done.count(b.key) || b.major() < cfg_.division_min_axis) continue;
    // Children are drawn before the trial so the random stream does not
    // depend on whether the division is feasible.
    const double axis = b.a >= b.b ? b.theta : b.theta + std::numbers::pi / 2.0;
    const double half = b.major() / 2.0;
    const Point u{std::cos(axis), std::sin(axis)};
    std::array<Point, 2> centers{Point{b.c.x + u.x * half * 1.05, b.c.y + u.y * half * 1.05},
                                 Point{b.c.x - u.x * half * 1.05, b.c.y - u.y * half * 1.05}};
    std::array<std::vector<double>, 2> profiles{draw_profile(), draw_profile()};
    if (population + 1 > static_cast<std::size_t>(cfg_.max_cells)) continue;
    if (!inside_margins(centers[0], half, b.minor()) || !inside_margins(centers[1], half, b.minor())) continue;
    std::array<Mask, 2> masks{outline(centers[0], half, b.minor(), axis, profiles[0]),
                              outline(centers[1], half, b.minor(), axis, profiles[1])};
    if (!fits(masks[0], nullptr, {b.key}) || !fits(masks[1], nullptr, {b.key})) continue;
    ++trials_.division_trials;
    if (!chance(rng_, cfg_.division_prob)) continue;
    ++trials_.divisions;
    TrackEvent ev{EventKind::Division, later, {b.id}, {}};
    for (int k = 0; k < 2; ++k) {
      Body child;
      child.key = next_key_++;
      child.c = centers[k];
      child.a = half;
      child.b = b.minor();
      child.theta = axis;
      child.profile = profiles[k];
      child.mask = masks[k];
      const CellId id = record(child, later);
      edges_.push_back({b.id, id, EdgeKind::Division});
      ev.later.push_back(id);
      next.push_back(std::move(child));
    }
    events_.push_back(std::move(ev));
    done.insert(b.key);
    ++population;
  }

  // New fusion pairs among neighbours that are otherwise idle.
  std::vector<const Body*> idle;
  for (const Body& b : cur)
    if (!b.partner && !done.count(b.key)) idle.push_back(&b);
  std::map<std::uint64_t, std::uint64_t> paired;
  for (std::size_t i = 0; i < idle.size(); ++i) {
    for (std::size_t j = i + 1; j < idle.size(); ++j) {
      const Body& x = *idle[i];
      const Body& y = *idle[j];
      if (paired.count(x.key) || paired.count(y.key)) continue;
      const double gap = std::hypot(x.c.x - y.c.x, x.c.y - y.c.y) - x.radius() - y.radius();
      if (gap >= cfg_.fusion_range) continue;
      ++trials_.fusion_trials;
      if (!chance(rng_, cfg_.fusion_prob)) continue;
      ++trials_.fusions_started;
      paired[x.key] = y.key;
      paired[y.key] = x.key;
    }
  }
  for (Body& b : cur)
    if (auto it = paired.find(b.key); it != paired.end()) b.partner = it->second;
  for (Body& b : cur) by_key[b.key] = &b;

  for (const Body& x : cur) {
    if (!x.partner || done.count(x.key) || x.key > *x.partner) continue;
    const Body& y = *by_key.at(*x.partner);
    const double dx = y.c.x - x.c.x, dy = y.c.y - x.c.y;
    const double d = std::hypot(dx, dy);
    const Point u{dx / d, dy / d};
    const std::int64_t shared = overlap(x.mask, y.mask);
    const double smaller = static_cast<double>(std::min(x.mask.area(), y.mask.area()));
    if (static_cast<double>(shared) >= cfg_.fusion_overlap * smaller) {
      const double ax = x.area(), ay = y.area();
      const Point c{(ax * x.c.x + ay * y.c.x) / (ax + ay), (ax * x.c.y + ay * y.c.y) / (ax + ay)};
      const double along = d / 2.0 + (x.radius() + y.radius()) / 2.0;
      const double across = (ax + ay) * cfg_.growth_rate / (std::numbers::pi * along);
      const double theta = std::atan2(u.y, u.x);
      auto profile = draw_profile();
      if (inside_margins(c, along, across)) {
        Mask m = outline(c, along, across, theta, profile);
        if (fits(m, nullptr, {x.key, y.key})) {
          ++trials_.fusions;
          Body fused;
          fused.key = next_key_++;
          fused.c = c;
          fused.a = along;
          fused.b = across;
          fused.theta = theta;
          fused.profile = std::move(profile);
          fused.mask = std::move(m);
          const CellId id = record(fused, later);
          edges_.push_back({x.id, id, EdgeKind::Fusion});
          edges_.push_back({y.id, id, EdgeKind::Fusion});
          events_.push_back({EventKind::Fusion, later, {x.id, y.id}, {id}});
          done.insert(x.key);
          done.insert(y.key);
          next.push_back(std::move(fused));
          --population;
          continue;
        }
      }
      continue_as(x, moved(x, x.c, x.a, x.b));
      continue_as(y, moved(y, y.c, y.a, y.b));
      continue;
    }
    // Close in: both cells move straight towards each other.
    const double g = std::max(x.major(), y.major()) < size_cap ? growth : 1.0;
    const double s = cfg_.approach_speed;
    Body nx = moved(x, {x.c.x + u.x * s, x.c.y + u.y * s}, x.a * g, x.b * g);
    Body ny = moved(y, {y.c.x - u.x * s, y.c.y - u.y * s}, y.a * g, y.b * g);
    const bool ok = inside_margins(nx.c, nx.a, nx.b) && inside_margins(ny.c, ny.a, ny.b) &&
                    fits(nx.mask, &x, {y.key}) && fits(ny.mask, &y, {x.key});
    continue_as(x, ok ? std::move(nx) : moved(x, x.c, x.a, x.b));
    continue_as(y, ok ? std::move(ny) : moved(y, y.c, y.a, y.b));
  }

  for (const Body& b : cur) {
    if (done.count(b.key)) continue;
    const double g = b.major() < size_cap ? growth : 1.0;
    std::optional<Body> accepted;
    for (int attempt = 0; attempt < 5 && !accepted; ++attempt) {
      Point c{b.c.x + truncated_normal(rng_, cfg_.motion_sigma), b.c.y + truncated_normal(rng_, cfg_.motion_sigma)};
      const double r = reach(b.a * g, b.b * g);
      const double w = cfg_.frame_size.width, h = cfg_.frame_size.height;
      if (c.x < r) c.x = 2 * r - c.x;
      if (c.y < r) c.y = 2 * r - c.y;
      if (c.x > w - r) c.x = 2 * (w - r) - c.x;
      if (c.y > h - r) c.y = 2 * (h - r) - c.y;
      if (!inside_margins(c, b.a * g, b.b * g)) continue;
      Body cand = moved(b, c, b.a * g, b.b * g);
      if (fits(cand.mask, &b, {})) accepted = std::move(cand);
    }
    continue_as(b, accepted ? std::move(*accepted) : moved(b, b.c, b.a, b.b));
  }

  const int arrivals = poisson(rng_, cfg_.appearance_rate);
  for (int n = 0; n < arrivals; ++n) {
    for (int attempt = 0; attempt < 200; ++attempt) {
      if (population + 1 > static_cast<std::size_t>(cfg_.max_cells)) break;
      Body cand = random_body();
      auto far = [&](const Body& o) {
        return std::hypot(cand.c.x - o.c.x, cand.c.y - o.c.y) >= cfg_.spawn_distance &&
               std::hypot(cand.c.x - o.c.x, cand.c.y - o.c.y) >= reach(cand.a, cand.b) + reach(o.a, o.b) + 3.0;
      };
      if (!std::all_of(cur.begin(), cur.end(), far) || !std::all_of(next.begin(), next.end(), far)) continue;
      cand.key = next_key_++;
      cand.mask = outline(cand.c, cand.a, cand.b, cand.theta, cand.profile);
      const CellId id = record(cand, later);
      events_.push_back({EventKind::Appearance, later, {}, {id}});
      next.push_back(std::move(cand));
      ++trials_.appearances;
      ++population;
      break;
    }
  }

  // Partners of cells that vanished or fused go back to being free.
  std::set<std::uint64_t> keys;
  for (const Body& b : next) keys.insert(b.key);
  for (Body& b : next)
    if (b.partner && !keys.count(*b.partner)) b.partner.reset();
  std::sort(next.begin(), next.end(), [](const Body& x, const Body& y) { return x.key < y.key; });
  return next;
}

void Generator::assign_labels(Scenario& s) {
  LineageForest& f = s.forest;
  // Weakly connected families share one label, so every merge is unanimous.
  std::map<CellId, CellId> parent;
  for (const auto& [id, _] : f.nodes) parent[id] = id;
  auto find = [&](CellId x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& [key, kind] : f.edges) {
    const CellId a = find(key.first), b = find(key.second);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
  std::map<CellId, Label> family_label;
  for (const auto& [id, _] : f.nodes) {
    const CellId root = find(id);
    if (!family_label.count(root))
      family_label[root] = chance(rng_, cfg_.ipsc_fraction) ? Label::iPSC : Label::DfC;
  }
  for (const auto& [id, node] : f.nodes)
    if (node.frame == f.final_frame) s.seeds[id] = family_label.at(find(id));

  if (!s.seeds.empty()) {
    Propagation p = propagate_labels(f, s.seeds);
    if (!p.ok()) throw Error("simulator: ground-truth lineage produced a label conflict");
    f = std::move(*p.labeled);
  }
  for (CellInstance& c : s.sequence.cells) {
    const CellInstance& n = f.node(c.id);
    c.label = n.label;
    c.track = n.track;
  }
}

Scenario Generator::run() {
  cfg_.validate();
  place_initial();
  Scenario s;
  s.config = cfg_;
  for (Body& b : bodies_) record(b, 1);
  for (FrameIndex t = 1; t < cfg_.frame_count; ++t) bodies_ = step(std::move(bodies_), t + 1);

  SequenceManifest& seq = s.sequence;
  seq.roi = cfg_.roi;
  seq.frame_size = cfg_.frame_size;
  seq.provenance = Provenance::Manual;
  for (FrameIndex t = 1; t <= cfg_.frame_count; ++t) seq.frames.push_back(t);
  seq.cells = std::move(cells_);
  seq.canonicalize();

  LineageForest& f = s.forest;
  f.roi = seq.roi;
  f.frame_size = seq.frame_size;
  f.frames = seq.frames;
  f.final_frame = seq.frames.back();
  for (const CellInstance& c : seq.cells) f.nodes.emplace(c.id, c);
  for (const Edge& e : edges_) f.add_edge(e);
  assign_tracks(f);
  s.events = std::move(events_);
  canonicalize_events(s.events);
  assign_labels(s);
  s.trials = trials_;
  return s;
}

}  // namespace

void ScenarioConfig::validate() const {
  if (frame_count < 2) throw Error("simulator: frame_count must be >= 2");
  if (frame_size.width <= 0 || frame_size.height <= 0) throw Error("simulator: frame size must be positive");
  if (initial_cells < 0 || max_cells < initial_cells) throw Error("simulator: need 0 <= initial_cells <= max_cells");
  check_prob(division_prob, "division_prob");
  check_prob(fusion_prob, "fusion_prob");
  check_prob(disappearance_prob, "disappearance_prob");
  check_prob(ipsc_fraction, "ipsc_fraction");
  check_prob(fusion_overlap, "fusion_overlap");
  if (!(appearance_rate >= 0.0)) throw Error("simulator: appearance_rate must be non-negative");
  if (!(motion_sigma >= 0.0)) throw Error("simulator: motion_sigma must be non-negative");
  if (!(growth_rate >= 1.0)) throw Error("simulator: growth_rate must be >= 1");
  if (!(radius_min >= 3.0 && radius_min <= radius_max)) throw Error("simulator: need 3 <= radius_min <= radius_max");
  if (!(aspect_min > 0.0 && aspect_min <= 1.0)) throw Error("simulator: aspect_min must lie in (0, 1]");
  if (control_points < 8 || control_points > 16) throw Error("simulator: control_points must lie in [8, 16]");
  if (!(boundary_noise >= 0.0 && boundary_noise <= 0.2)) throw Error("simulator: boundary_noise must lie in [0, 0.2]");
  if (!(approach_speed > 0.0)) throw Error("simulator: approach_speed must be positive");
}

Scenario generate_scenario(const ScenarioConfig& cfg) { return Generator(cfg).run(); }

void NoiseConfig::validate() const {
  check_prob(drop_prob, "drop_prob");
  check_prob(dup_prob, "dup_prob");
  check_prob(flip_prob, "flip_prob");
  if (jitter_px < 0) throw Error("noise: jitter_px must be non-negative");
  if (!(whole_rate >= 0.0 && part_rate >= 0.0)) throw Error("noise: spurious rates must be non-negative");
  if (!(min_confidence >= 0.5 && min_confidence <= max_confidence && max_confidence <= 1.0))
    throw Error("noise: need 0.5 <= min_confidence <= max_confidence <= 1");
}

namespace {

class Injector {
 public:
  Injector(const SequenceManifest& gt, const NoiseConfig& noise) : gt_(gt), noise_(noise), rng_(noise.rng_seed) {}

  SyntheticDetections run() {
    noise_.validate();
    SyntheticDetections out;
    out.detections.roi = gt_.roi;
    out.detections.frame_size = gt_.frame_size;
    out.detections.frames = gt_.frames;
    out.detections.provenance = Provenance::Detector;
    out.detections.roi_origin = gt_.roi_origin;
    out.detections.frame_images = gt_.frame_images;
    for (const auto& [frame, cells] : gt_.by_frame()) {
      InjectedFrame inj{frame, {}};
      inject_frame(frame, cells, out.detections.cells, inj);
      for (std::size_t k = 0; k < kOutcomeCount; ++k) out.totals[k] += inj.counts[k];
      out.injected.push_back(inj);
    }
    out.detections.canonicalize();
    return out;
  }

 private:
  static std::size_t slot(Outcome o) { return static_cast<std::size_t>(o); }

  // True when `m` can only ever pair with `source` (nullptr: with nothing).
  bool eligible_only_for(const Mask& m, const CellInstance* source) const {
    for (const CellInstance* g : labeled_) {
      const double v = m.bbox().intersects(g->bbox()) ? iou(m, g->mask) : 0.0;
      if (g == source ? v < noise_.match.match_iou : v >= noise_.match.match_iou) return false;
    }
    return true;
  }

  double best_share(const Mask& m) const {
    double best = 0.0;
    for (const CellInstance* g : labeled_) {
      if (!m.bbox().intersects(g->bbox())) continue;
      best = std::max(best, double(intersection_area(m, g->mask)) / double(m.area()));
    }
    return best;
  }

  std::optional<Mask> try_translate(const Mask& m, int dx, int dy) const {
    try {
      return m.translated(dx, dy);
    } catch (const GeometryError&) {
      return std::nullopt;
    }
  }

  Mask jittered(const CellInstance& g, int spread) {
    std::uniform_int_distribution<int> offset(-spread, spread);
    for (int attempt = 0; attempt < 10 && spread > 0; ++attempt) {
      const int dx = offset(rng_), dy = offset(rng_);
      if (auto m = try_translate(g.mask, dx, dy); m && eligible_only_for(*m, &g)) return *m;
    }
    return g.mask;
  }

  std::optional<Mask> disc(const Point& c, double r) const {
    std::vector<Point> pts;
    for (int k = 0; k < 16; ++k) {
      const double phi = kTwoPi * k / 16;
      pts.push_back({round2(c.x + r * std::cos(phi)), round2(c.y + r * std::sin(phi))});
    }
    try {
      return Mask(std::move(pts), gt_.frame_size);
    } catch (const GeometryError&) {
      return std::nullopt;
    }
  }

  void emit(std::vector<CellInstance>& dets, FrameIndex frame, Mask mask, Label predicted) {
    CellInstance d;
    d.id = CellId{next_id_++};
    d.frame = frame;
    d.roi = gt_.roi;
    d.mask = std::move(mask);
    d.label = predicted;
    d.confidence = std::round(uniform(rng_, noise_.min_confidence, noise_.max_confidence) * 1000.0) / 1000.0;
    dets.push_back(std::move(d));
  }

  void inject_frame(FrameIndex frame, const std::vector<CellInstance>& cells, std::vector<CellInstance>& dets,
                    InjectedFrame& inj) {
    labeled_.clear();
    std::vector<const CellInstance*> unlabeled;
    for (const CellInstance& c : cells) (c.label == Label::Unlabeled ? unlabeled : labeled_).push_back(&c);

    for (const CellInstance* g : labeled_) {
      const bool is_ipsc = g->label == Label::iPSC;
      if (chance(rng_, noise_.drop_prob)) {
        ++inj.counts[slot(is_ipsc ? Outcome::FN_DET : Outcome::DfcMissed)];
        continue;
      }
      const bool flipped = chance(rng_, noise_.flip_prob);
      const Label predicted = flipped ? (is_ipsc ? Label::DfC : Label::iPSC) : g->label;
      emit(dets, frame, jittered(*g, noise_.jitter_px), predicted);
      if (is_ipsc) ++inj.counts[slot(flipped ? Outcome::FN_CLS : Outcome::TP)];
      else ++inj.counts[slot(flipped ? Outcome::FP_CLS : Outcome::TN)];
      if (is_ipsc && !flipped && chance(rng_, noise_.dup_prob)) {
        emit(dets, frame, jittered(*g, std::max(1, noise_.jitter_px)), Label::iPSC);
        ++inj.counts[slot(Outcome::FP_DUP)];
      }
    }

    const int parts = labeled_.empty() ? 0 : poisson(rng_, noise_.part_rate);
    for (int n = 0; n < parts; ++n) {
      const CellInstance* host = labeled_[std::uniform_int_distribution<std::size_t>(0, labeled_.size() - 1)(rng_)];
      const double r = std::max(2.0, 0.3 * std::sqrt(double(host->mask.area()) / std::numbers::pi));
      const auto spans = host->mask.raster().spans();
      for (int attempt = 0; attempt < 50; ++attempt) {
        const Span& s = spans[std::uniform_int_distribution<std::size_t>(0, spans.size() - 1)(rng_)];
        const int x = std::uniform_int_distribution<int>(s.x_begin, s.x_end - 1)(rng_);
        auto m = disc({x + 0.5, s.y + 0.5}, r);
        if (!m || !eligible_only_for(*m, nullptr) || best_share(*m) < noise_.match.part_containment) continue;
        emit(dets, frame, std::move(*m), Label::iPSC);
        ++inj.counts[slot(Outcome::FP_NEX_PART)];
        break;
      }
    }

    const int wholes = poisson(rng_, noise_.whole_rate);
    for (int n = 0; n < wholes; ++n) {
      for (int attempt = 0; attempt < 50; ++attempt) {
        std::optional<Mask> m;
        if (next_unlabeled_ < unlabeled.size()) {
          m = unlabeled[next_unlabeled_++]->mask;
        } else {
          const double r = uniform(rng_, 6.0, 14.0);
          m = disc({uniform(rng_, r + 1, gt_.frame_size.width - r - 1), uniform(rng_, r + 1, gt_.frame_size.height - r - 1)},
                   r);
        }
        if (!m || !eligible_only_for(*m, nullptr) || best_share(*m) >= noise_.match.part_containment) continue;
        emit(dets, frame, std::move(*m), Label::iPSC);
        ++inj.counts[slot(Outcome::FP_NEX_WHOLE)];
        break;
      }
    }
    next_unlabeled_ = 0;
  }

  const SequenceManifest& gt_;
  const NoiseConfig& noise_;
  Rng rng_;
  std::uint64_t next_id_ = 1;
  std::vector<const CellInstance*> labeled_;
  std::size_t next_unlabeled_ = 0;
};

}  // namespace

SyntheticDetections synthesize_detections(const SequenceManifest& gt, const NoiseConfig& noise) {
  return Injector(gt, noise).run();
}

SyntheticDetections synthesize_detections(const Scenario& s, const NoiseConfig& noise) {
  return synthesize_detections(s.sequence, noise);
}

}  // namespace ipsc
