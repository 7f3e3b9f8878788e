#pragma once

// Frame-to-frame association and division/fusion event detection.
//
// Association is greedy by descending IOU (IOU-tracker style). Events are
// always reported in forward-time orientation: a Division has one earlier
// and several later instances even when the sequence is tracked backwards,
// where it is observed as a merge.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ipsc/lineage.hpp"
#include "ipsc/sequence.hpp"

namespace ipsc {

enum class EventKind : std::uint8_t { Continuation, Division, Fusion, Appearance, Disappearance };

std::string_view to_string(EventKind kind);
EventKind parse_event_kind(std::string_view text);

/// Name of the same event seen with time reversed.
EventKind time_reversed(EventKind kind);

struct TrackEvent {
  EventKind kind = EventKind::Continuation;
  FrameIndex at_frame = 0;  // later frame of the step
  std::vector<CellId> earlier;
  std::vector<CellId> later;
  friend auto operator<=>(const TrackEvent&, const TrackEvent&) = default;
};

/// Edges contributed by an event (none for Appearance/Disappearance).
std::vector<Edge> edges_of(const TrackEvent& event);

/// Sorts ids inside each event, then events by (frame, kind, ids).
void canonicalize_events(std::vector<TrackEvent>& events);

struct TrackParams {
  double iou_gate = 0.3;
  double centroid_gate = 50.0;  // px
  double size_ratio_low = 0.6;
  double size_ratio_high = 1.67;
  double event_overlap_min = 0.5;
  double shape_change_max = 3.0;  // z-scored shape distance units

  /// Throws Error unless iou_gate ∈ (0,1) and low < 1 < high.
  void validate() const;
  friend bool operator==(const TrackParams&, const TrackParams&) = default;
};

struct AssociationScore {
  double iou = 0.0;
  double distance = 0.0;
};

/// nullopt when both gates fail (iou < iou_gate and distance > centroid_gate).
std::optional<AssociationScore> association_score(const CellInstance& a, const CellInstance& b, const TrackParams& p);

struct Association {
  CellId earlier;
  CellId later;
  double iou = 0.0;
  double distance = 0.0;
};

struct FrameAssociation {
  std::vector<Association> matches;
  std::vector<CellId> unmatched_earlier;
  std::vector<CellId> unmatched_later;
};

/// Greedy one-to-one matching: IOU descending, then centroid distance
/// ascending, then earlier id, then later id.
FrameAssociation associate_frames(std::span<const CellInstance> earlier, std::span<const CellInstance> later,
                                  const TrackParams& p);

/// Division or fusion candidate, ranked by mean overlap fraction.
struct EventProposal {
  std::string id;
  TrackEvent event;
  double score = 0.0;
};

/// Non-conflicting division/fusion candidates for one step.
std::vector<EventProposal> propose_events(const FrameAssociation& assoc, std::span<const CellInstance> earlier,
                                          std::span<const CellInstance> later, const TrackParams& p,
                                          const ShapeMetric& metric = {});

/// Batch event detection: proposals are committed, the remaining matches
/// become Continuations and leftovers Appearance/Disappearance. Every
/// instance of both frames lands in exactly one event.
std::vector<TrackEvent> detect_events(const FrameAssociation& assoc, std::span<const CellInstance> earlier,
                                      std::span<const CellInstance> later, const TrackParams& p,
                                      const ShapeMetric& metric = {});

/// Events implied by the association alone (no division/fusion).
std::vector<TrackEvent> events_from_association(const FrameAssociation& assoc, std::span<const CellInstance> earlier,
                                                std::span<const CellInstance> later);

enum class Direction : std::uint8_t { Backward, Forward };
enum class TrackMode : std::uint8_t { Batch, Interactive };

struct TrackOptions {
  TrackParams params;
  Direction direction = Direction::Backward;
  TrackMode mode = TrackMode::Batch;
  unsigned jobs = 1;
};

struct TrackerState {
  SequenceManifest sequence;
  TrackOptions options;
  ShapeMetric metric;
  LineageForest forest;
  std::vector<TrackEvent> events;  // committed, sorted
  std::vector<EventProposal> proposals;  // pending (interactive mode)
};

/// Forest over all instances of the sequence with edges from `events`.
LineageForest build_forest(const SequenceManifest& sequence, std::span<const TrackEvent> events);

/// Tracks every adjacent frame pair. Throws Error for < 2 frames or frames
/// out of order.
TrackerState start_tracking(const SequenceManifest& sequence, const TrackOptions& options);
LineageForest track_sequence(const SequenceManifest& sequence, const TrackOptions& options);

struct Correction {
  enum class Kind : std::uint8_t { Replace, Add, Remove };
  Kind kind = Kind::Replace;
  CellInstance cell;  // Replace/Add
  CellId id;          // Remove
};

/// Applies corrections to frames beyond `frame` (in tracking direction) and
/// recomputes every step that touches them; edges of the other steps,
/// including manual edits, are kept. Throws NotFoundError for corrections
/// naming unknown instances and Error for corrections outside that range.
TrackerState resume_from_frame(const TrackerState& state, FrameIndex frame, std::span<const Correction> corrections);

}  // namespace ipsc
