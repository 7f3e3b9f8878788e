#include "ipsc/lineage.hpp"

#include <algorithm>
#include <deque>
#include <sstream>

namespace ipsc {

namespace {

std::string id_str(CellId id) { return std::to_string(id.value); }

std::uint8_t label_bit(Label l) {
  switch (l) {
    case Label::iPSC:
      return 1;
    case Label::DfC:
      return 2;
    case Label::Unlabeled:
      break;
  }
  return 0;
}

// Kahn's algorithm restricted to edges between existing nodes. Returns the
// nodes left over (those on or behind a cycle).
std::vector<CellId> nodes_on_cycles(const LineageForest& f, const Adjacency& adj) {
  std::unordered_map<CellId, std::size_t> indegree;
  for (const auto& [id, _] : f.nodes) indegree[id] = 0;
  for (const auto& [key, kind] : f.edges)
    if (f.has_node(key.first) && f.has_node(key.second)) ++indegree[key.second];
  std::deque<CellId> ready;
  for (const auto& [id, d] : indegree)
    if (d == 0) ready.push_back(id);
  std::size_t visited = 0;
  while (!ready.empty()) {
    const CellId id = ready.front();
    ready.pop_front();
    ++visited;
    for (const Edge& e : adj.out(id)) {
      if (!f.has_node(e.later)) continue;
      if (--indegree[e.later] == 0) ready.push_back(e.later);
    }
  }
  std::vector<CellId> left;
  if (visited == f.nodes.size()) return left;
  for (const auto& [id, d] : indegree)
    if (d > 0) left.push_back(id);
  std::sort(left.begin(), left.end());
  return left;
}

}  // namespace

std::string_view to_string(EdgeKind kind) {
  switch (kind) {
    case EdgeKind::Continuation:
      return "continuation";
    case EdgeKind::Division:
      return "division";
    case EdgeKind::Fusion:
      return "fusion";
  }
  return "continuation";
}

EdgeKind parse_edge_kind(std::string_view text) {
  if (text == "continuation") return EdgeKind::Continuation;
  if (text == "division") return EdgeKind::Division;
  if (text == "fusion") return EdgeKind::Fusion;
  throw Error("unknown edge kind '" + std::string(text) + "'");
}

std::string_view to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::DanglingEdge:
      return "dangling_edge";
    case ViolationKind::EdgeOrientation:
      return "edge_orientation";
    case ViolationKind::Cycle:
      return "cycle";
    case ViolationKind::ContinuationArity:
      return "continuation_arity";
    case ViolationKind::DivisionArity:
      return "division_arity";
    case ViolationKind::FusionArity:
      return "fusion_arity";
    case ViolationKind::MixedEdgeKinds:
      return "mixed_edge_kinds";
    case ViolationKind::NodeBeyondFinalFrame:
      return "node_beyond_final_frame";
  }
  return "unknown";
}

const CellInstance& LineageForest::node(CellId id) const {
  auto it = nodes.find(id);
  if (it == nodes.end()) throw NotFoundError("unknown instance id " + id_str(id));
  return it->second;
}

CellInstance& LineageForest::node(CellId id) {
  auto it = nodes.find(id);
  if (it == nodes.end()) throw NotFoundError("unknown instance id " + id_str(id));
  return it->second;
}

std::vector<Edge> LineageForest::edge_list() const {
  std::vector<Edge> out;
  out.reserve(edges.size());
  for (const auto& [key, kind] : edges) out.push_back({key.first, key.second, kind});
  return out;
}

bool same_lineage(const LineageForest& a, const LineageForest& b) {
  return a.roi == b.roi && a.frame_size == b.frame_size && a.frames == b.frames && a.final_frame == b.final_frame &&
         a.nodes == b.nodes && a.edges == b.edges;
}

Adjacency::Adjacency(const LineageForest& forest) {
  for (const Edge& e : forest.edge_list()) {
    out_[e.earlier].push_back(e);
    in_[e.later].push_back(e);
  }
}

std::span<const Edge> Adjacency::out(CellId id) const {
  auto it = out_.find(id);
  return it == out_.end() ? std::span<const Edge>{} : std::span<const Edge>(it->second);
}

std::span<const Edge> Adjacency::in(CellId id) const {
  auto it = in_.find(id);
  return it == in_.end() ? std::span<const Edge>{} : std::span<const Edge>(it->second);
}

std::vector<Violation> validate_forest(const LineageForest& f) {
  std::vector<Violation> v;
  const Adjacency adj(f);

  for (const Edge& e : f.edge_list()) {
    if (!f.has_node(e.earlier) || !f.has_node(e.later)) {
      v.push_back({ViolationKind::DanglingEdge, {e.earlier, e.later},
                   "edge " + id_str(e.earlier) + "->" + id_str(e.later) + " references a missing node"});
      continue;
    }
    if (f.node(e.earlier).frame >= f.node(e.later).frame) {
      v.push_back({ViolationKind::EdgeOrientation, {e.earlier, e.later},
                   "edge " + id_str(e.earlier) + "->" + id_str(e.later) + " does not go forward in time"});
    }
  }

  if (auto cyc = nodes_on_cycles(f, adj); !cyc.empty()) {
    v.push_back({ViolationKind::Cycle, cyc, "graph contains a directed cycle"});
  }

  for (const auto& [id, node] : f.nodes) {
    if (node.frame > f.final_frame) {
      v.push_back({ViolationKind::NodeBeyondFinalFrame, {id}, "node " + id_str(id) + " lies after the final frame"});
    }
    const auto out = adj.out(id);
    if (!out.empty()) {
      const EdgeKind k = out.front().kind;
      const bool mixed = std::any_of(out.begin(), out.end(), [k](const Edge& e) { return e.kind != k; });
      if (mixed) {
        v.push_back({ViolationKind::MixedEdgeKinds, {id}, "node " + id_str(id) + " has successors of mixed kinds"});
      } else if (k == EdgeKind::Continuation && out.size() > 1) {
        v.push_back({ViolationKind::ContinuationArity, {id},
                     "node " + id_str(id) + " has " + std::to_string(out.size()) + " continuation successors"});
      } else if (k == EdgeKind::Division && out.size() < 2) {
        v.push_back({ViolationKind::DivisionArity, {id}, "division at node " + id_str(id) + " has fewer than 2 children"});
      } else if (k == EdgeKind::Fusion && out.size() > 1) {
        v.push_back({ViolationKind::FusionArity, {id}, "fusing node " + id_str(id) + " has more than one successor"});
      }
    }
    const auto in = adj.in(id);
    if (!in.empty()) {
      const EdgeKind k = in.front().kind;
      const bool mixed = std::any_of(in.begin(), in.end(), [k](const Edge& e) { return e.kind != k; });
      if (mixed) {
        v.push_back({ViolationKind::MixedEdgeKinds, {id}, "node " + id_str(id) + " has predecessors of mixed kinds"});
      } else if (k == EdgeKind::Continuation && in.size() > 1) {
        v.push_back({ViolationKind::ContinuationArity, {id},
                     "node " + id_str(id) + " has " + std::to_string(in.size()) + " continuation predecessors"});
      } else if (k == EdgeKind::Division && in.size() > 1) {
        v.push_back({ViolationKind::DivisionArity, {id}, "division child " + id_str(id) + " has more than one parent"});
      } else if (k == EdgeKind::Fusion && in.size() < 2) {
        v.push_back({ViolationKind::FusionArity, {id}, "fusion at node " + id_str(id) + " has fewer than 2 parents"});
      }
    }
  }
  return v;
}

SeedLabels seeds_from_final_frame(const LineageForest& forest) {
  SeedLabels seeds;
  for (const auto& [id, node] : forest.nodes)
    if (node.frame == forest.final_frame && node.label != Label::Unlabeled) seeds[id] = node.label;
  return seeds;
}

Propagation propagate_labels(const LineageForest& forest, const SeedLabels& seeds) {
  if (seeds.empty()) throw Error("propagate_labels: no seed labels given");
  if (auto violations = validate_forest(forest); !violations.empty())
    throw Error("propagate_labels: forest is invalid: " + violations.front().message);
  for (const auto& [id, label] : seeds) {
    const CellInstance& n = forest.node(id);
    if (n.frame != forest.final_frame)
      throw Error("propagate_labels: seed " + id_str(id) + " is not on the final frame " +
                  std::to_string(forest.final_frame));
    if (label == Label::Unlabeled) throw Error("propagate_labels: seed " + id_str(id) + " has no class");
  }

  const Adjacency adj(forest);
  std::vector<CellId> order;
  order.reserve(forest.nodes.size());
  for (const auto& [id, _] : forest.nodes) order.push_back(id);
  // Descending frame is a reverse topological order once edges go forward in time.
  std::stable_sort(order.begin(), order.end(),
                   [&](CellId a, CellId b) { return forest.nodes.at(a).frame > forest.nodes.at(b).frame; });

  std::unordered_map<CellId, std::uint8_t> reach;
  reach.reserve(order.size());
  for (CellId id : order) {
    std::uint8_t bits = 0;
    if (auto s = seeds.find(id); s != seeds.end()) bits |= label_bit(s->second);
    for (const Edge& e : adj.out(id)) bits |= reach[e.later];
    reach[id] = bits;
  }

  Propagation result;
  for (const auto& [id, _] : forest.nodes) {
    if (reach[id] != 3) continue;
    Conflict c{id, {Label::iPSC, Label::DfC}, {}};
    std::set<CellId> seen{id};
    std::deque<CellId> queue{id};
    while (!queue.empty()) {
      const CellId cur = queue.front();
      queue.pop_front();
      if (seeds.count(cur)) c.seeds.push_back(cur);
      for (const Edge& e : adj.out(cur))
        if (seen.insert(e.later).second) queue.push_back(e.later);
    }
    std::sort(c.seeds.begin(), c.seeds.end());
    result.conflicts.push_back(std::move(c));
  }
  if (!result.conflicts.empty()) return result;

  LineageForest labeled = forest;
  for (auto& [id, node] : labeled.nodes) {
    switch (reach[id]) {
      case 1:
        node.label = Label::iPSC;
        break;
      case 2:
        node.label = Label::DfC;
        break;
      default:
        node.label = Label::Unlabeled;
    }
  }
  result.labeled = std::move(labeled);
  return result;
}

std::set<CellId> find_uncategorizable(const LineageForest& forest) {
  const Adjacency adj(forest);
  std::set<CellId> reachable;
  std::deque<CellId> queue;
  for (const auto& [id, node] : forest.nodes) {
    if (node.frame == forest.final_frame) {
      reachable.insert(id);
      queue.push_back(id);
    }
  }
  while (!queue.empty()) {
    const CellId cur = queue.front();
    queue.pop_front();
    for (const Edge& e : adj.in(cur))
      if (forest.has_node(e.earlier) && reachable.insert(e.earlier).second) queue.push_back(e.earlier);
  }
  std::set<CellId> out;
  for (const auto& [id, _] : forest.nodes)
    if (!reachable.count(id)) out.insert(id);
  return out;
}

void assign_tracks(LineageForest& forest) {
  const Adjacency adj(forest);
  auto continuation_pred = [&](CellId id) -> std::optional<CellId> {
    const auto in = adj.in(id);
    if (in.size() == 1 && in.front().kind == EdgeKind::Continuation) return in.front().earlier;
    return std::nullopt;
  };
  auto continuation_succ = [&](CellId id) -> std::optional<CellId> {
    const auto out = adj.out(id);
    if (out.size() == 1 && out.front().kind == EdgeKind::Continuation && forest.has_node(out.front().later))
      return out.front().later;
    return std::nullopt;
  };

  std::vector<CellId> heads;
  for (const auto& [id, _] : forest.nodes) {
    auto pred = continuation_pred(id);
    if (!pred || !forest.has_node(*pred)) heads.push_back(id);
  }
  std::sort(heads.begin(), heads.end(), [&](CellId a, CellId b) {
    const auto fa = forest.nodes.at(a).frame, fb = forest.nodes.at(b).frame;
    return fa != fb ? fa < fb : a < b;
  });
  for (auto& [id, node] : forest.nodes) node.track.reset();
  std::uint64_t next = 1;
  for (CellId head : heads) {
    const TrackId track{next++};
    std::optional<CellId> cur = head;
    while (cur && !forest.nodes.at(*cur).track) {
      forest.nodes.at(*cur).track = track;
      cur = continuation_succ(*cur);
    }
  }
}

EditRejected::EditRejected(const std::string& reason, std::vector<Violation> violations)
    : Error(reason), violations_(std::move(violations)) {}

namespace {

struct EditApplier {
  LineageForest& f;

  void require(CellId id) const { (void)f.node(id); }

  void operator()(const edit::SetEventKind& e) const {
    for (CellId id : e.earlier) require(id);
    for (CellId id : e.later) require(id);
    const std::size_t ne = e.earlier.size(), nl = e.later.size();
    bool arity_ok = false;
    switch (e.kind) {
      case EdgeKind::Continuation:
        arity_ok = ne == 1 && nl == 1;
        break;
      case EdgeKind::Division:
        arity_ok = ne == 1 && nl >= 2;
        break;
      case EdgeKind::Fusion:
        arity_ok = ne >= 2 && nl == 1;
        break;
    }
    if (!arity_ok) {
      std::ostringstream os;
      os << "set-event-kind: " << to_string(e.kind) << " cannot join " << ne << " earlier to " << nl
         << " later instances";
      const ViolationKind vk = e.kind == EdgeKind::Continuation ? ViolationKind::ContinuationArity
                               : e.kind == EdgeKind::Division   ? ViolationKind::DivisionArity
                                                                : ViolationKind::FusionArity;
      std::vector<CellId> ids = e.earlier;
      ids.insert(ids.end(), e.later.begin(), e.later.end());
      throw EditRejected(os.str(), {{vk, ids, os.str()}});
    }
    for (auto it = f.edges.begin(); it != f.edges.end();) {
      const bool leaves = std::find(e.earlier.begin(), e.earlier.end(), it->first.first) != e.earlier.end();
      const bool enters = std::find(e.later.begin(), e.later.end(), it->first.second) != e.later.end();
      it = (leaves || enters) ? f.edges.erase(it) : std::next(it);
    }
    for (CellId a : e.earlier)
      for (CellId b : e.later) f.add_edge({a, b, e.kind});
  }

  void operator()(const edit::AddEdge& e) const {
    require(e.edge.earlier);
    require(e.edge.later);
    if (f.edges.count({e.edge.earlier, e.edge.later}))
      throw EditRejected("add-edge: edge " + id_str(e.edge.earlier) + "->" + id_str(e.edge.later) + " already exists");
    f.add_edge(e.edge);
  }

  void operator()(const edit::RemoveEdge& e) const {
    require(e.earlier);
    require(e.later);
    if (f.edges.erase({e.earlier, e.later}) == 0)
      throw EditRejected("remove-edge: no edge " + id_str(e.earlier) + "->" + id_str(e.later));
  }

  void operator()(const edit::SplitTrack& e) const {
    require(e.node);
    std::size_t removed = 0;
    for (auto it = f.edges.begin(); it != f.edges.end();) {
      if (it->first.second == e.node) {
        it = f.edges.erase(it);
        ++removed;
      } else {
        ++it;
      }
    }
    if (removed == 0) throw EditRejected("split-track: node " + id_str(e.node) + " already starts a track");
  }

  void operator()(const edit::MergeTracks& e) const {
    require(e.tail);
    require(e.head);
    const Adjacency adj(f);
    if (!adj.out(e.tail).empty()) throw EditRejected("merge-tracks: " + id_str(e.tail) + " is not a track tail");
    if (!adj.in(e.head).empty()) throw EditRejected("merge-tracks: " + id_str(e.head) + " is not a track head");
    f.add_edge({e.tail, e.head, EdgeKind::Continuation});
  }

  void operator()(const edit::SetSeedLabel& e) const {
    CellInstance& n = f.node(e.node);
    if (n.frame != f.final_frame)
      throw EditRejected("set-seed-label: node " + id_str(e.node) + " is not on the final frame");
    n.label = e.label;
  }
};

}  // namespace

LineageForest apply_edit(const LineageForest& forest, const Edit& edit) {
  LineageForest next = forest;
  std::visit(EditApplier{next}, edit);
  if (auto violations = validate_forest(next); !violations.empty()) {
    std::string reason = "edit rejected: " + violations.front().message;
    throw EditRejected(reason, std::move(violations));
  }
  assign_tracks(next);
  next.revision = forest.revision + 1;
  return next;
}

}  // namespace ipsc
