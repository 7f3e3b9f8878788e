#include "ipsc/tracking.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <unordered_map>

#include "ipsc/parallel.hpp"

namespace ipsc {

std::string_view to_string(EventKind kind) {
  switch (kind) {
    case EventKind::Continuation:
      return "continuation";
    case EventKind::Division:
      return "division";
    case EventKind::Fusion:
      return "fusion";
    case EventKind::Appearance:
      return "appearance";
    case EventKind::Disappearance:
      return "disappearance";
  }
  return "continuation";
}

EventKind parse_event_kind(std::string_view text) {
  for (EventKind k : {EventKind::Continuation, EventKind::Division, EventKind::Fusion, EventKind::Appearance,
                      EventKind::Disappearance})
    if (to_string(k) == text) return k;
  throw Error("unknown event kind '" + std::string(text) + "'");
}

EventKind time_reversed(EventKind kind) {
  switch (kind) {
    case EventKind::Division:
      return EventKind::Fusion;
    case EventKind::Fusion:
      return EventKind::Division;
    case EventKind::Appearance:
      return EventKind::Disappearance;
    case EventKind::Disappearance:
      return EventKind::Appearance;
    case EventKind::Continuation:
      break;
  }
  return EventKind::Continuation;
}

std::vector<Edge> edges_of(const TrackEvent& event) {
  std::vector<Edge> out;
  EdgeKind kind;
  switch (event.kind) {
    case EventKind::Continuation:
      kind = EdgeKind::Continuation;
      break;
    case EventKind::Division:
      kind = EdgeKind::Division;
      break;
    case EventKind::Fusion:
      kind = EdgeKind::Fusion;
      break;
    default:
      return out;
  }
  for (CellId a : event.earlier)
    for (CellId b : event.later) out.push_back({a, b, kind});
  return out;
}

void canonicalize_events(std::vector<TrackEvent>& events) {
  for (auto& e : events) {
    std::sort(e.earlier.begin(), e.earlier.end());
    std::sort(e.later.begin(), e.later.end());
  }
  std::sort(events.begin(), events.end(), [](const TrackEvent& a, const TrackEvent& b) {
    if (a.at_frame != b.at_frame) return a.at_frame < b.at_frame;
    if (a.kind != b.kind) return a.kind < b.kind;
    if (a.earlier != b.earlier) return a.earlier < b.earlier;
    return a.later < b.later;
  });
}

void TrackParams::validate() const {
  if (!(iou_gate > 0.0 && iou_gate < 1.0)) throw Error("track params: iou_gate must lie in (0, 1)");
  if (!(centroid_gate >= 0.0)) throw Error("track params: centroid_gate must be non-negative");
  if (!(size_ratio_low > 0.0 && size_ratio_low < 1.0 && size_ratio_high > 1.0))
    throw Error("track params: size ratio bounds must satisfy 0 < low < 1 < high");
  if (!(event_overlap_min >= 0.0 && event_overlap_min <= 1.0))
    throw Error("track params: event_overlap_min must lie in [0, 1]");
  if (!(shape_change_max >= 0.0)) throw Error("track params: shape_change_max must be non-negative");
}

namespace {

double distance(const Point& a, const Point& b) { return std::hypot(a.x - b.x, a.y - b.y); }

std::optional<ShapeFeatures> features_or_none(const Mask& m) {
  try {
    return shape_features(m);
  } catch (const GeometryError&) {
    return std::nullopt;
  }
}

// Pixel overlaps between the two frames, only for pairs whose boxes meet.
struct OverlapTable {
  std::vector<std::vector<std::pair<std::size_t, std::int64_t>>> by_earlier;
  std::vector<std::vector<std::pair<std::size_t, std::int64_t>>> by_later;

  OverlapTable(std::span<const CellInstance> earlier, std::span<const CellInstance> later)
      : by_earlier(earlier.size()), by_later(later.size()) {
    for (std::size_t i = 0; i < earlier.size(); ++i) {
      for (std::size_t j = 0; j < later.size(); ++j) {
        const std::int64_t inter = intersection_area(earlier[i].mask, later[j].mask);
        if (inter <= 0) continue;
        by_earlier[i].push_back({j, inter});
        by_later[j].push_back({i, inter});
      }
    }
  }
};

template <class T>
std::unordered_map<CellId, std::size_t> index_of(std::span<const T> cells) {
  std::unordered_map<CellId, std::size_t> idx;
  for (std::size_t i = 0; i < cells.size(); ++i) idx[cells[i].id] = i;
  return idx;
}

std::string proposal_id(const TrackEvent& e) {
  CellId lowest = e.earlier.empty() ? e.later.front() : e.earlier.front();
  for (CellId id : e.earlier) lowest = std::min(lowest, id);
  for (CellId id : e.later) lowest = std::min(lowest, id);
  return std::string(to_string(e.kind)) + "-" + std::to_string(e.at_frame) + "-" + std::to_string(lowest.value);
}

}  // namespace

std::optional<AssociationScore> association_score(const CellInstance& a, const CellInstance& b, const TrackParams& p) {
  const double d = distance(a.centroid(), b.centroid());
  const double overlap = iou(a.mask, b.mask);
  if (overlap < p.iou_gate && d > p.centroid_gate) return std::nullopt;
  return AssociationScore{overlap, d};
}

FrameAssociation associate_frames(std::span<const CellInstance> earlier, std::span<const CellInstance> later,
                                  const TrackParams& p) {
  std::vector<Association> candidates;
  for (const CellInstance& a : earlier) {
    for (const CellInstance& b : later) {
      // Cheap rejection: no shared pixels and too far apart fails both gates.
      if (!a.bbox().intersects(b.bbox()) && distance(a.centroid(), b.centroid()) > p.centroid_gate) continue;
      if (auto s = association_score(a, b, p)) candidates.push_back({a.id, b.id, s->iou, s->distance});
    }
  }
  std::sort(candidates.begin(), candidates.end(), [](const Association& x, const Association& y) {
    if (x.iou != y.iou) return x.iou > y.iou;
    if (x.distance != y.distance) return x.distance < y.distance;
    if (x.earlier != y.earlier) return x.earlier < y.earlier;
    return x.later < y.later;
  });

  FrameAssociation out;
  std::set<CellId> used_earlier, used_later;
  for (const Association& c : candidates) {
    if (used_earlier.count(c.earlier) || used_later.count(c.later)) continue;
    used_earlier.insert(c.earlier);
    used_later.insert(c.later);
    out.matches.push_back(c);
  }
  for (const CellInstance& a : earlier)
    if (!used_earlier.count(a.id)) out.unmatched_earlier.push_back(a.id);
  for (const CellInstance& b : later)
    if (!used_later.count(b.id)) out.unmatched_later.push_back(b.id);
  std::sort(out.unmatched_earlier.begin(), out.unmatched_earlier.end());
  std::sort(out.unmatched_later.begin(), out.unmatched_later.end());
  return out;
}

std::vector<EventProposal> propose_events(const FrameAssociation& assoc, std::span<const CellInstance> earlier,
                                          std::span<const CellInstance> later, const TrackParams& p,
                                          const ShapeMetric& metric) {
  if (earlier.empty() || later.empty()) return {};
  const auto e_idx = index_of(earlier);
  const auto l_idx = index_of(later);
  const FrameIndex at_frame = later.front().frame;
  const OverlapTable overlaps(earlier, later);

  constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  std::vector<std::size_t> match_e(earlier.size(), kNone), match_l(later.size(), kNone);
  // A match is "loose" when it was admitted only through the centroid gate or
  // when size or shape changed more than a continuing cell plausibly does.
  std::vector<bool> loose_e(earlier.size(), false), loose_l(later.size(), false);
  for (const Association& m : assoc.matches) {
    const std::size_t i = e_idx.at(m.earlier), j = l_idx.at(m.later);
    match_e[i] = j;
    match_l[j] = i;
    bool loose = m.iou < p.iou_gate;
    const double ratio = static_cast<double>(later[j].mask.area()) / static_cast<double>(earlier[i].mask.area());
    if (ratio < p.size_ratio_low || ratio > p.size_ratio_high) loose = true;
    if (!loose) {
      const auto fa = features_or_none(earlier[i].mask), fb = features_or_none(later[j].mask);
      if (fa && fb && shape_distance(*fa, *fb, metric) > p.shape_change_max) loose = true;
    }
    loose_e[i] = loose_l[j] = loose;
  }

  std::vector<EventProposal> candidates;

  // One earlier cell covering several later cells: division.
  for (std::size_t i = 0; i < earlier.size(); ++i) {
    std::vector<std::size_t> kids;
    double overlap_sum = 0.0;
    for (auto [j, inter] : overlaps.by_earlier[i]) {
      const double frac = static_cast<double>(inter) / static_cast<double>(later[j].mask.area());
      if (frac >= p.event_overlap_min) {
        kids.push_back(j);
        overlap_sum += frac;
      }
    }
    if (kids.size() < 2) continue;
    bool claimable = true;
    double kid_area = 0.0;
    for (std::size_t j : kids) {
      kid_area += static_cast<double>(later[j].mask.area());
      if (match_l[j] != kNone && match_l[j] != i && !loose_l[j]) claimable = false;
    }
    if (match_e[i] != kNone && std::find(kids.begin(), kids.end(), match_e[i]) == kids.end() && !loose_e[i])
      claimable = false;
    const double ratio = kid_area / static_cast<double>(earlier[i].mask.area());
    if (!claimable || ratio < p.size_ratio_low || ratio > p.size_ratio_high) continue;
    TrackEvent ev{EventKind::Division, at_frame, {earlier[i].id}, {}};
    for (std::size_t j : kids) ev.later.push_back(later[j].id);
    candidates.push_back({"", std::move(ev), overlap_sum / static_cast<double>(kids.size())});
  }

  // Several earlier cells covered by one later cell: fusion.
  for (std::size_t j = 0; j < later.size(); ++j) {
    std::vector<std::size_t> parents;
    double overlap_sum = 0.0;
    for (auto [i, inter] : overlaps.by_later[j]) {
      const double frac = static_cast<double>(inter) / static_cast<double>(earlier[i].mask.area());
      if (frac >= p.event_overlap_min) {
        parents.push_back(i);
        overlap_sum += frac;
      }
    }
    if (parents.size() < 2) continue;
    bool claimable = true;
    double parent_area = 0.0;
    for (std::size_t i : parents) {
      parent_area += static_cast<double>(earlier[i].mask.area());
      if (match_e[i] != kNone && match_e[i] != j && !loose_e[i]) claimable = false;
    }
    if (match_l[j] != kNone && std::find(parents.begin(), parents.end(), match_l[j]) == parents.end() && !loose_l[j])
      claimable = false;
    const double ratio = static_cast<double>(later[j].mask.area()) / parent_area;
    if (!claimable || ratio < p.size_ratio_low || ratio > p.size_ratio_high) continue;
    TrackEvent ev{EventKind::Fusion, at_frame, {}, {later[j].id}};
    for (std::size_t i : parents) ev.earlier.push_back(earlier[i].id);
    candidates.push_back({"", std::move(ev), overlap_sum / static_cast<double>(parents.size())});
  }

  for (auto& c : candidates) {
    std::sort(c.event.earlier.begin(), c.event.earlier.end());
    std::sort(c.event.later.begin(), c.event.later.end());
    c.id = proposal_id(c.event);
  }
  std::sort(candidates.begin(), candidates.end(), [](const EventProposal& a, const EventProposal& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.event.kind != b.event.kind) return a.event.kind < b.event.kind;
    return a.id < b.id;
  });

  std::set<CellId> taken;
  std::vector<EventProposal> accepted;
  for (auto& c : candidates) {
    auto clashes = [&](const std::vector<CellId>& ids) {
      return std::any_of(ids.begin(), ids.end(), [&](CellId id) { return taken.count(id) != 0; });
    };
    if (clashes(c.event.earlier) || clashes(c.event.later)) continue;
    taken.insert(c.event.earlier.begin(), c.event.earlier.end());
    taken.insert(c.event.later.begin(), c.event.later.end());
    accepted.push_back(std::move(c));
  }
  return accepted;
}

namespace {

std::vector<TrackEvent> assemble_events(const FrameAssociation& assoc, std::span<const CellInstance> earlier,
                                        std::span<const CellInstance> later,
                                        std::span<const EventProposal> committed) {
  std::vector<TrackEvent> events;
  std::set<CellId> claimed;
  for (const EventProposal& pr : committed) {
    events.push_back(pr.event);
    claimed.insert(pr.event.earlier.begin(), pr.event.earlier.end());
    claimed.insert(pr.event.later.begin(), pr.event.later.end());
  }
  const FrameIndex at_frame = later.empty() ? (earlier.empty() ? 0 : earlier.front().frame + 1) : later.front().frame;
  std::set<CellId> done = claimed;
  for (const Association& m : assoc.matches) {
    if (claimed.count(m.earlier) || claimed.count(m.later)) continue;
    events.push_back({EventKind::Continuation, at_frame, {m.earlier}, {m.later}});
    done.insert(m.earlier);
    done.insert(m.later);
  }
  for (const CellInstance& a : earlier)
    if (!done.count(a.id)) events.push_back({EventKind::Disappearance, at_frame, {a.id}, {}});
  for (const CellInstance& b : later)
    if (!done.count(b.id)) events.push_back({EventKind::Appearance, at_frame, {}, {b.id}});
  canonicalize_events(events);
  return events;
}

struct StepResult {
  std::vector<TrackEvent> events;
  std::vector<EventProposal> proposals;
};

StepResult run_step(std::span<const CellInstance> earlier, std::span<const CellInstance> later, const TrackOptions& o,
                    const ShapeMetric& metric) {
  const FrameAssociation assoc = associate_frames(earlier, later, o.params);
  StepResult r;
  auto proposals = propose_events(assoc, earlier, later, o.params, metric);
  if (o.mode == TrackMode::Batch) {
    r.events = assemble_events(assoc, earlier, later, proposals);
  } else {
    r.events = assemble_events(assoc, earlier, later, {});
    r.proposals = std::move(proposals);
  }
  return r;
}

ShapeMetric fit_metric(const SequenceManifest& s) {
  std::vector<ShapeFeatures> population;
  population.reserve(s.cells.size());
  for (const CellInstance& c : s.cells)
    if (auto f = features_or_none(c.mask)) population.push_back(*f);
  return ShapeMetric::fit(population);
}

void check_trackable(const SequenceManifest& s) {
  s.validate();
  if (s.frames.size() < 2) throw Error("tracking needs >= 2 frames, sequence '" + s.roi + "' has " +
                                       std::to_string(s.frames.size()));
}

// Indices of steps (frames[i], frames[i+1]) lying beyond `frame` in the
// tracking direction.
std::vector<std::size_t> steps_beyond(const std::vector<FrameIndex>& frames, Direction dir, FrameIndex frame) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i + 1 < frames.size(); ++i) {
    const bool beyond = dir == Direction::Backward ? frames[i] < frame : frames[i + 1] > frame;
    if (beyond) out.push_back(i);
  }
  return out;
}

bool frame_beyond(Direction dir, FrameIndex cell_frame, FrameIndex frame) {
  return dir == Direction::Backward ? cell_frame < frame : cell_frame > frame;
}

std::vector<StepResult> run_steps(const SequenceManifest& seq, const std::vector<std::size_t>& steps,
                                  const TrackOptions& o, const ShapeMetric& metric) {
  const auto frames = seq.by_frame();
  std::vector<std::size_t> order = steps;
  // Steps are independent; the tracking direction only fixes the order in which they are visited.
  if (o.direction == Direction::Backward) std::reverse(order.begin(), order.end());
  auto results = parallel_map(order.size(), o.jobs, [&](std::size_t k) {
    const std::size_t i = order[k];
    const auto& earlier = frames.at(seq.frames[i]);
    const auto& later = frames.at(seq.frames[i + 1]);
    return run_step(earlier, later, o, metric);
  });
  return results;
}

}  // namespace

std::vector<TrackEvent> detect_events(const FrameAssociation& assoc, std::span<const CellInstance> earlier,
                                      std::span<const CellInstance> later, const TrackParams& p,
                                      const ShapeMetric& metric) {
  const auto proposals = propose_events(assoc, earlier, later, p, metric);
  return assemble_events(assoc, earlier, later, proposals);
}

std::vector<TrackEvent> events_from_association(const FrameAssociation& assoc, std::span<const CellInstance> earlier,
                                                std::span<const CellInstance> later) {
  return assemble_events(assoc, earlier, later, {});
}

LineageForest build_forest(const SequenceManifest& sequence, std::span<const TrackEvent> events) {
  LineageForest f;
  f.roi = sequence.roi;
  f.frame_size = sequence.frame_size;
  f.frames = sequence.frames;
  f.final_frame = sequence.frames.empty() ? 0 : sequence.frames.back();
  for (const CellInstance& c : sequence.cells) f.nodes.emplace(c.id, c);
  for (const TrackEvent& e : events)
    for (const Edge& edge : edges_of(e)) f.add_edge(edge);
  assign_tracks(f);
  return f;
}

TrackerState start_tracking(const SequenceManifest& sequence, const TrackOptions& options) {
  options.params.validate();
  check_trackable(sequence);
  TrackerState st;
  st.sequence = sequence;
  st.sequence.canonicalize();
  st.options = options;
  st.metric = fit_metric(st.sequence);

  std::vector<std::size_t> all(st.sequence.frames.size() - 1);
  std::iota(all.begin(), all.end(), 0);
  for (auto& r : run_steps(st.sequence, all, options, st.metric)) {
    st.events.insert(st.events.end(), r.events.begin(), r.events.end());
    st.proposals.insert(st.proposals.end(), r.proposals.begin(), r.proposals.end());
  }
  canonicalize_events(st.events);
  std::sort(st.proposals.begin(), st.proposals.end(),
            [](const EventProposal& a, const EventProposal& b) { return a.id < b.id; });
  st.forest = build_forest(st.sequence, st.events);
  return st;
}

LineageForest track_sequence(const SequenceManifest& sequence, const TrackOptions& options) {
  return start_tracking(sequence, options).forest;
}

TrackerState resume_from_frame(const TrackerState& state, FrameIndex frame, std::span<const Correction> corrections) {
  const auto& frames = state.sequence.frames;
  if (std::find(frames.begin(), frames.end(), frame) == frames.end())
    throw Error("resume: frame " + std::to_string(frame) + " is not part of the sequence");
  const Direction dir = state.options.direction;

  TrackerState next = state;
  std::set<CellId> removed;
  std::map<CellId, CellInstance> upserts;
  auto locate = [&](CellId id) {
    return std::find_if(next.sequence.cells.begin(), next.sequence.cells.end(),
                        [id](const CellInstance& c) { return c.id == id; });
  };
  for (const Correction& c : corrections) {
    const CellId id = c.kind == Correction::Kind::Remove ? c.id : c.cell.id;
    auto it = locate(id);
    if (c.kind != Correction::Kind::Add && it == next.sequence.cells.end())
      throw NotFoundError("resume: correction references unknown instance " + std::to_string(id.value));
    if (c.kind == Correction::Kind::Add && it != next.sequence.cells.end())
      throw Error("resume: instance " + std::to_string(id.value) + " already exists");
    const FrameIndex f = c.kind == Correction::Kind::Remove ? it->frame : c.cell.frame;
    if (!frame_beyond(dir, f, frame) || (c.kind == Correction::Kind::Replace && !frame_beyond(dir, it->frame, frame)))
      throw Error("resume: correction of instance " + std::to_string(id.value) + " at frame " + std::to_string(f) +
                  " is not beyond resume frame " + std::to_string(frame));
    switch (c.kind) {
      case Correction::Kind::Remove:
        next.sequence.cells.erase(it);
        removed.insert(id);
        break;
      case Correction::Kind::Replace:
        *it = c.cell;
        upserts[id] = c.cell;
        break;
      case Correction::Kind::Add:
        next.sequence.cells.push_back(c.cell);
        upserts[id] = c.cell;
        break;
    }
  }
  next.sequence.canonicalize();
  next.sequence.validate();

  const auto steps = steps_beyond(frames, dir, frame);
  std::set<FrameIndex> redone_at;  // later frame of each recomputed step
  for (std::size_t i : steps) redone_at.insert(frames[i + 1]);

  // Drop results of recomputed steps; keep everything else untouched.
  std::erase_if(next.events, [&](const TrackEvent& e) { return redone_at.count(e.at_frame) != 0; });
  std::erase_if(next.proposals, [&](const EventProposal& p) { return redone_at.count(p.event.at_frame) != 0; });
  LineageForest& f = next.forest;
  for (CellId id : removed) f.nodes.erase(id);
  for (auto& [id, cell] : upserts) f.nodes[id] = cell;
  std::erase_if(f.edges, [&](const auto& kv) {
    const CellId a = kv.first.first, b = kv.first.second;
    if (!f.has_node(a) || !f.has_node(b)) return true;
    return redone_at.count(f.node(b).frame) != 0;
  });

  for (auto& r : run_steps(next.sequence, steps, next.options, next.metric)) {
    next.events.insert(next.events.end(), r.events.begin(), r.events.end());
    next.proposals.insert(next.proposals.end(), r.proposals.begin(), r.proposals.end());
    for (const TrackEvent& e : r.events)
      for (const Edge& edge : edges_of(e)) f.add_edge(edge);
  }
  canonicalize_events(next.events);
  std::sort(next.proposals.begin(), next.proposals.end(),
            [](const EventProposal& a, const EventProposal& b) { return a.id < b.id; });
  assign_tracks(f);
  f.revision = state.forest.revision + 1;
  return next;
}

}  // namespace ipsc
