#pragma once

// Lineage forest storage, retrospective label propagation and the edit
// operations used during manual correction.

#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "ipsc/types.hpp"

namespace ipsc {

enum class EdgeKind : std::uint8_t { Continuation, Division, Fusion };

std::string_view to_string(EdgeKind kind);
EdgeKind parse_edge_kind(std::string_view text);

/// Directed edge oriented earlier -> later in forward time.
struct Edge {
  CellId earlier;
  CellId later;
  EdgeKind kind = EdgeKind::Continuation;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

/// Flat node table + edge table. May hold invalid graphs; validate_forest
/// reports what is wrong with them.
struct LineageForest {
  std::string roi;
  FrameSize frame_size{};
  std::vector<FrameIndex> frames;
  FrameIndex final_frame = 0;
  std::uint64_t revision = 0;
  std::map<CellId, CellInstance> nodes;
  std::map<std::pair<CellId, CellId>, EdgeKind> edges;

  bool has_node(CellId id) const { return nodes.count(id) != 0; }
  /// Throws NotFoundError.
  const CellInstance& node(CellId id) const;
  CellInstance& node(CellId id);
  std::vector<Edge> edge_list() const;
  void add_edge(const Edge& e) { edges[{e.earlier, e.later}] = e.kind; }
};

/// Same nodes, labels, tracks and typed edges; revision ignored.
bool same_lineage(const LineageForest& a, const LineageForest& b);

/// Per-node incoming and outgoing edges.
class Adjacency {
 public:
  explicit Adjacency(const LineageForest& forest);
  std::span<const Edge> out(CellId id) const;
  std::span<const Edge> in(CellId id) const;

 private:
  std::unordered_map<CellId, std::vector<Edge>> out_;
  std::unordered_map<CellId, std::vector<Edge>> in_;
};

enum class ViolationKind : std::uint8_t {
  DanglingEdge,
  EdgeOrientation,
  Cycle,
  ContinuationArity,
  DivisionArity,
  FusionArity,
  MixedEdgeKinds,
  NodeBeyondFinalFrame,
};

std::string_view to_string(ViolationKind kind);

struct Violation {
  ViolationKind kind;
  std::vector<CellId> nodes;
  std::string message;
};

/// Checks every structural invariant. Pure; never throws on bad graphs.
std::vector<Violation> validate_forest(const LineageForest& forest);

using SeedLabels = std::map<CellId, Label>;

/// Final-frame nodes whose label is iPSC or DfC.
SeedLabels seeds_from_final_frame(const LineageForest& forest);

struct Conflict {
  CellId node;
  std::vector<Label> labels;  // >= 2 distinct
  std::vector<CellId> seeds;  // contributing final-frame seeds
};

struct Propagation {
  std::optional<LineageForest> labeled;  // set iff conflicts is empty
  std::vector<Conflict> conflicts;
  bool ok() const { return conflicts.empty(); }
};

/// Flows seed labels from the final frame to every ancestor. A node reached
/// by seeds of different labels is a Conflict; any conflict aborts the whole
/// propagation. Nodes with no seeded descendant end up Unlabeled.
/// Throws Error for an empty seed map, seeds off the final frame, or an
/// invalid forest; NotFoundError for unknown seed ids.
Propagation propagate_labels(const LineageForest& forest, const SeedLabels& seeds);

/// Nodes with no directed path to any final-frame node.
std::set<CellId> find_uncategorizable(const LineageForest& forest);

/// Renumbers track ids: one track per maximal Continuation chain, numbered
/// from 1 in (frame, id) order of the chain heads.
void assign_tracks(LineageForest& forest);

namespace edit {

/// Replaces the edges leaving `earlier` and entering `later` by one event.
struct SetEventKind {
  std::vector<CellId> earlier;
  std::vector<CellId> later;
  EdgeKind kind = EdgeKind::Continuation;
};
struct AddEdge {
  Edge edge;
};
struct RemoveEdge {
  CellId earlier;
  CellId later;
};
/// Detaches a node from its predecessors so that a new track starts there.
struct SplitTrack {
  CellId node;
};
/// Joins a track tail to a track head with a Continuation edge.
struct MergeTracks {
  CellId tail;
  CellId head;
};
struct SetSeedLabel {
  CellId node;
  Label label = Label::Unlabeled;
};

}  // namespace edit

using Edit = std::variant<edit::SetEventKind, edit::AddEdge, edit::RemoveEdge, edit::SplitTrack, edit::MergeTracks,
                          edit::SetSeedLabel>;

class EditRejected : public Error {
 public:
  EditRejected(const std::string& reason, std::vector<Violation> violations = {});
  const std::vector<Violation>& violations() const { return violations_; }

 private:
  std::vector<Violation> violations_;
};

/// Returns a new forest version (revision + 1) or throws EditRejected when
/// the result would violate a forest invariant; NotFoundError for unknown ids.
LineageForest apply_edit(const LineageForest& forest, const Edit& edit);

}  // namespace ipsc
