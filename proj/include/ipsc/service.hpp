#pragma once

// In-process backend of the review service: sequences, writer sessions,
// optimistic revisions and the per-sequence mutation log.
//
// Every mutation is a JSON op (see apply_mutation). The log keeps accepted
// ops in order, so replaying it from the loaded sequence rebuilds the
// current state.

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "ipsc/datastore.hpp"
#include "ipsc/metrics.hpp"
#include "ipsc/report.hpp"
#include "ipsc/tracking.hpp"

namespace ipsc {

/// The caller's revision is not the current one.
class RevisionConflict : public Error {
 public:
  RevisionConflict(const std::string& what, std::uint64_t current) : Error(what), current_(current) {}
  std::uint64_t current() const { return current_; }

 private:
  std::uint64_t current_;
};

/// Missing or invalid session token.
class SessionError : public Error {
 public:
  using Error::Error;
};

/// Another session holds the writer lock of the sequence.
class LockHeld : public Error {
 public:
  using Error::Error;
};

/// State of one sequence as seen by the service.
struct SequenceState {
  SequenceManifest sequence;
  std::optional<TrackerState> tracker;  // set once tracking started
  SeedLabels seeds;
  std::uint64_t revision = 0;
};

/// Applies one op to `state` and returns the op's result payload. Ops:
///   start_tracking  {params?, direction?, mode?}
///   accept_proposal {id}        reject_proposal {id}
///   apply_edit      {edit}      resume {frame, corrections?}
///   set_seeds       {seeds}
/// Each accepted op increments the revision. Throws Error on bad input,
/// NotFoundError for unknown ids, EditRejected for invariant violations;
/// `state` is unchanged when it throws.
Json apply_mutation(SequenceState& state, const Json& op, unsigned jobs = 1);

/// Replays a mutation log on a freshly loaded sequence.
SequenceState replay_log(const SequenceManifest& sequence, const std::vector<Json>& log);

struct SessionInfo {
  std::string token;
  std::string sequence;
  std::uint64_t revision = 0;
};

struct SequenceSummary {
  std::string id;
  std::size_t frames = 0;
  std::size_t cells = 0;
  std::uint64_t revision = 0;
  bool tracked = false;
  bool has_detections = false;
  bool locked = false;
};

class Workspace {
 public:
  explicit Workspace(unsigned jobs = 1) : jobs_(jobs) {}

  /// Registers a sequence under its ROI name. Throws Error on duplicates.
  std::string add_sequence(SequenceManifest sequence);
  /// Detector output used by metrics(). Throws NotFoundError.
  void set_detections(const std::string& id, SequenceManifest detections);

  std::vector<SequenceSummary> list() const;
  SequenceSummary summary(const std::string& id) const;
  /// Consistent copy of the sequence state.
  SequenceState snapshot(const std::string& id) const;
  std::vector<Json> log(const std::string& id) const;

  /// Opens the writer session of a sequence. Throws LockHeld when another
  /// session owns it, unless `take_over`.
  SessionInfo open_session(const std::string& id, bool take_over = false);
  void close_session(const std::string& token);

  /// Checks token and revision, applies the op atomically and logs it.
  /// The result carries the new revision.
  Json mutate(const std::string& id, const std::string& token, std::uint64_t expected_revision, const Json& op);

  /// Read-only propagation of the stored seeds over the current forest.
  Json propagate(const std::string& id) const;
  Json metrics(const std::string& id, const EvalConfig& cfg) const;

 private:
  struct Entry {
    mutable std::shared_mutex mutex;
    SequenceState state;
    std::optional<SequenceManifest> detections;
    std::vector<Json> log;
    std::optional<std::string> owner;  // writer session token
  };

  std::shared_ptr<Entry> find(const std::string& id) const;
  std::string new_token();

  unsigned jobs_;
  mutable std::shared_mutex mutex_;  // guards the maps, not the entries
  std::map<std::string, std::shared_ptr<Entry>> sequences_;
  std::map<std::string, std::string> sessions_;  // token -> sequence
  std::uint64_t token_counter_ = 0;
};

}  // namespace ipsc
