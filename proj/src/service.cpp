#include "ipsc/service.hpp"

#include <algorithm>
#include <random>
#include <sstream>

#include "ipsc/config.hpp"

namespace ipsc {

namespace {

const Json& require(const Json& op, const char* key) {
  auto it = op.find(key);
  if (it == op.end()) throw Error(std::string("op is missing field '") + key + "'");
  return *it;
}

std::string require_string(const Json& op, const char* key) {
  const Json& v = require(op, key);
  if (!v.is_string()) throw Error(std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

TrackerState& tracked(SequenceState& s) {
  if (!s.tracker) throw Error("tracking has not been started for sequence '" + s.sequence.roi + "'");
  return *s.tracker;
}

Direction parse_direction(const std::string& s) {
  if (s == "backward") return Direction::Backward;
  if (s == "forward") return Direction::Forward;
  throw Error("direction must be 'backward' or 'forward', got '" + s + "'");
}

TrackMode parse_mode(const std::string& s) {
  if (s == "interactive") return TrackMode::Interactive;
  if (s == "batch") return TrackMode::Batch;
  throw Error("mode must be 'interactive' or 'batch', got '" + s + "'");
}

EdgeKind edge_kind_of(EventKind k) {
  switch (k) {
    case EventKind::Division:
      return EdgeKind::Division;
    case EventKind::Fusion:
      return EdgeKind::Fusion;
    default:
      return EdgeKind::Continuation;
  }
}

Correction correction_from_json(const Json& j, FrameSize frame, std::size_t index) {
  const std::string where = "corrections[" + std::to_string(index) + "]";
  if (!j.is_object()) throw Error(where + ": correction must be an object");
  const std::string kind = j.contains("kind") && j["kind"].is_string() ? j["kind"].get<std::string>() : "";
  Correction c;
  if (kind == "remove") {
    c.kind = Correction::Kind::Remove;
    if (!j.contains("id") || !j["id"].is_number_unsigned()) throw Error(where + ": field 'id' must be an id");
    c.id = CellId{j["id"].get<std::uint64_t>()};
    return c;
  }
  if (kind == "replace")
    c.kind = Correction::Kind::Replace;
  else if (kind == "add")
    c.kind = Correction::Kind::Add;
  else
    throw Error(where + ": field 'kind' must be 'replace', 'add' or 'remove'");
  if (!j.contains("cell")) throw Error(where + ": field 'cell' is missing");
  c.cell = cell_from_json(j["cell"], frame, where + ".cell");
  c.id = c.cell.id;
  return c;
}

void stamp_revision(SequenceState& s) {
  ++s.revision;
  if (s.tracker) s.tracker->forest.revision = s.revision;
}

}  // namespace

Json apply_mutation(SequenceState& state, const Json& op, unsigned jobs) {
  if (!op.is_object()) throw Error("op must be a JSON object");
  const std::string name = require_string(op, "op");
  SequenceState next = state;
  Json result = Json::object();

  if (name == "start_tracking") {
    TrackOptions opt;
    opt.mode = TrackMode::Interactive;
    if (op.contains("params")) opt.params = track_params_from_json(op["params"]);
    if (op.contains("direction")) opt.direction = parse_direction(require_string(op, "direction"));
    if (op.contains("mode")) opt.mode = parse_mode(require_string(op, "mode"));
    opt.jobs = jobs;
    next.tracker = start_tracking(next.sequence, opt);
    next.seeds.clear();
    result["events"] = next.tracker->events.size();
    result["proposals"] = next.tracker->proposals.size();
  } else if (name == "accept_proposal" || name == "reject_proposal") {
    TrackerState& t = tracked(next);
    const std::string id = require_string(op, "id");
    auto it = std::find_if(t.proposals.begin(), t.proposals.end(), [&](const EventProposal& p) { return p.id == id; });
    if (it == t.proposals.end()) throw NotFoundError("unknown proposal '" + id + "'");
    const EventProposal p = *it;
    if (name == "accept_proposal") {
      t.forest = apply_edit(t.forest, edit::SetEventKind{p.event.earlier, p.event.later, edge_kind_of(p.event.kind)});
      std::set<CellId> ids(p.event.earlier.begin(), p.event.earlier.end());
      ids.insert(p.event.later.begin(), p.event.later.end());
      std::erase_if(t.events, [&](const TrackEvent& e) {
        if (e.at_frame != p.event.at_frame) return false;
        auto touches = [&](const std::vector<CellId>& v) {
          return std::any_of(v.begin(), v.end(), [&](CellId c) { return ids.count(c) != 0; });
        };
        return touches(e.earlier) || touches(e.later);
      });
      t.events.push_back(p.event);
      canonicalize_events(t.events);
      result["edges"] = edges_of(p.event).size();
    }
    t.proposals.erase(std::find_if(t.proposals.begin(), t.proposals.end(),
                                   [&](const EventProposal& q) { return q.id == id; }));
    result["proposal"] = id;
  } else if (name == "apply_edit") {
    TrackerState& t = tracked(next);
    t.forest = apply_edit(t.forest, edit_from_json(require(op, "edit")));
  } else if (name == "resume") {
    TrackerState& t = tracked(next);
    const Json& f = require(op, "frame");
    if (!f.is_number_integer()) throw Error("field 'frame' must be an integer");
    std::vector<Correction> corrections;
    if (op.contains("corrections")) {
      const Json& arr = op["corrections"];
      if (!arr.is_array()) throw Error("field 'corrections' must be an array");
      for (std::size_t i = 0; i < arr.size(); ++i)
        corrections.push_back(correction_from_json(arr[i], next.sequence.frame_size, i));
    }
    t.options.jobs = jobs;
    t = resume_from_frame(t, f.get<FrameIndex>(), corrections);
    next.sequence = t.sequence;
    std::erase_if(next.seeds, [&](const auto& kv) { return !t.forest.has_node(kv.first); });
    result["events"] = t.events.size();
    result["proposals"] = t.proposals.size();
  } else if (name == "set_seeds") {
    TrackerState& t = tracked(next);
    SeedLabels seeds = seeds_from_json(op);
    for (const auto& [id, label] : seeds) {
      if (!t.forest.has_node(id)) throw NotFoundError("seed references unknown instance " + std::to_string(id.value));
      if (t.forest.node(id).frame != t.forest.final_frame)
        throw Error("seed " + std::to_string(id.value) + " is not on the final frame " +
                    std::to_string(t.forest.final_frame));
    }
    next.seeds = std::move(seeds);
    result["seeds"] = next.seeds.size();
  } else {
    throw Error("unknown op '" + name + "'");
  }

  stamp_revision(next);
  state = std::move(next);
  result["revision"] = state.revision;
  return result;
}

SequenceState replay_log(const SequenceManifest& sequence, const std::vector<Json>& log) {
  SequenceState s;
  s.sequence = sequence;
  for (const Json& entry : log) {
    apply_mutation(s, entry.at("op"));
    if (entry.contains("revision") && entry["revision"].get<std::uint64_t>() != s.revision)
      throw Error("replay diverged at revision " + std::to_string(s.revision));
  }
  return s;
}

std::shared_ptr<Workspace::Entry> Workspace::find(const std::string& id) const {
  std::shared_lock lock(mutex_);
  auto it = sequences_.find(id);
  if (it == sequences_.end()) throw NotFoundError("unknown sequence '" + id + "'");
  return it->second;
}

std::string Workspace::add_sequence(SequenceManifest sequence) {
  sequence.canonicalize();
  sequence.validate();
  std::unique_lock lock(mutex_);
  const std::string id = sequence.roi;
  if (id.empty()) throw Error("sequence has no ROI name");
  if (sequences_.count(id)) throw Error("sequence '" + id + "' is already loaded");
  auto entry = std::make_shared<Entry>();
  entry->state.sequence = std::move(sequence);
  sequences_.emplace(id, std::move(entry));
  return id;
}

void Workspace::set_detections(const std::string& id, SequenceManifest detections) {
  auto e = find(id);
  std::unique_lock lock(e->mutex);
  frame_data(e->state.sequence, detections);  // validates the pairing
  e->detections = std::move(detections);
}

SequenceSummary Workspace::summary(const std::string& id) const {
  auto e = find(id);
  std::shared_lock lock(e->mutex);
  SequenceSummary s;
  s.id = id;
  s.frames = e->state.sequence.frames.size();
  s.cells = e->state.sequence.cells.size();
  s.revision = e->state.revision;
  s.tracked = e->state.tracker.has_value();
  s.has_detections = e->detections.has_value();
  s.locked = e->owner.has_value();
  return s;
}

std::vector<SequenceSummary> Workspace::list() const {
  std::vector<std::string> ids;
  {
    std::shared_lock lock(mutex_);
    for (const auto& [id, e] : sequences_) ids.push_back(id);
  }
  std::vector<SequenceSummary> out;
  for (const std::string& id : ids) out.push_back(summary(id));
  return out;
}

SequenceState Workspace::snapshot(const std::string& id) const {
  auto e = find(id);
  std::shared_lock lock(e->mutex);
  return e->state;
}

std::vector<Json> Workspace::log(const std::string& id) const {
  auto e = find(id);
  std::shared_lock lock(e->mutex);
  return e->log;
}

std::string Workspace::new_token() {
  static thread_local std::mt19937_64 rng{std::random_device{}()};
  std::ostringstream ss;
  ss << std::hex << rng() << '-' << ++token_counter_;
  return ss.str();
}

SessionInfo Workspace::open_session(const std::string& id, bool take_over) {
  auto e = find(id);
  std::unique_lock maps(mutex_);
  std::unique_lock lock(e->mutex);
  if (e->owner && !take_over) throw LockHeld("sequence '" + id + "' is being edited in another session");
  if (e->owner) sessions_.erase(*e->owner);
  SessionInfo info{new_token(), id, e->state.revision};
  sessions_[info.token] = id;
  e->owner = info.token;
  return info;
}

void Workspace::close_session(const std::string& token) {
  std::unique_lock maps(mutex_);
  auto it = sessions_.find(token);
  if (it == sessions_.end()) throw NotFoundError("unknown session");
  auto e = sequences_.at(it->second);
  sessions_.erase(it);
  std::unique_lock lock(e->mutex);
  if (e->owner == token) e->owner.reset();
}

Json Workspace::mutate(const std::string& id, const std::string& token, std::uint64_t expected_revision,
                       const Json& op) {
  auto e = find(id);
  {
    std::shared_lock maps(mutex_);
    auto it = sessions_.find(token);
    if (token.empty() || it == sessions_.end() || it->second != id)
      throw SessionError("a valid session token for sequence '" + id + "' is required");
  }
  std::unique_lock lock(e->mutex);
  if (e->owner != token) throw LockHeld("session no longer owns sequence '" + id + "'");
  if (expected_revision != e->state.revision)
    throw RevisionConflict("stale revision " + std::to_string(expected_revision) + ", current is " +
                               std::to_string(e->state.revision),
                           e->state.revision);
  Json result = apply_mutation(e->state, op, jobs_);
  e->log.push_back({{"revision", e->state.revision}, {"op", op}});
  return result;
}

Json Workspace::propagate(const std::string& id) const {
  auto e = find(id);
  std::shared_lock lock(e->mutex);
  const SequenceState& s = e->state;
  if (!s.tracker) throw Error("tracking has not been started for sequence '" + id + "'");
  if (s.seeds.empty()) throw Error("no seed labels set for sequence '" + id + "'");
  Json out = propagation_to_json(propagate_labels(s.tracker->forest, s.seeds), s.tracker->forest);
  out["revision"] = s.revision;
  return out;
}

Json Workspace::metrics(const std::string& id, const EvalConfig& cfg) const {
  auto e = find(id);
  std::shared_lock lock(e->mutex);
  if (!e->detections) throw NotFoundError("no detections loaded for sequence '" + id + "'");
  const auto frames = frame_data(e->state.sequence, *e->detections);
  EvalConfig c = cfg;
  c.jobs = jobs_;
  Json out = report_to_json(frame_wise_report(frames, c), c);
  out["config"] = to_json(c);
  out["revision"] = e->state.revision;
  return out;
}

}  // namespace ipsc
