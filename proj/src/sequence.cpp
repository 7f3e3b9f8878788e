#include "ipsc/sequence.hpp"

#include <algorithm>
#include <set>

namespace ipsc {

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::Manual:
      return "manual";
    case Provenance::Tracker:
      return "tracker";
    case Provenance::Detector:
      return "detector";
  }
  return "manual";
}

Provenance parse_provenance(std::string_view text) {
  if (text == "manual") return Provenance::Manual;
  if (text == "tracker") return Provenance::Tracker;
  if (text == "detector") return Provenance::Detector;
  throw Error("unknown provenance '" + std::string(text) + "'");
}

std::vector<CellInstance> SequenceManifest::cells_in(FrameIndex frame) const {
  std::vector<CellInstance> out;
  for (const CellInstance& c : cells)
    if (c.frame == frame) out.push_back(c);
  std::sort(out.begin(), out.end(), [](const CellInstance& a, const CellInstance& b) { return a.id < b.id; });
  return out;
}

std::map<FrameIndex, std::vector<CellInstance>> SequenceManifest::by_frame() const {
  std::map<FrameIndex, std::vector<CellInstance>> out;
  for (FrameIndex f : frames) out[f];
  for (const CellInstance& c : cells) out[c.frame].push_back(c);
  for (auto& [f, v] : out)
    std::sort(v.begin(), v.end(), [](const CellInstance& a, const CellInstance& b) { return a.id < b.id; });
  return out;
}

void SequenceManifest::canonicalize() {
  std::sort(cells.begin(), cells.end(), [](const CellInstance& a, const CellInstance& b) {
    return a.frame != b.frame ? a.frame < b.frame : a.id < b.id;
  });
}

void SequenceManifest::validate() const {
  for (std::size_t i = 1; i < frames.size(); ++i)
    if (frames[i] <= frames[i - 1])
      throw Error("sequence '" + roi + "': frame ids are not strictly increasing at " + std::to_string(frames[i]));
  const std::set<FrameIndex> listed(frames.begin(), frames.end());
  std::set<CellId> ids;
  for (const CellInstance& c : cells) {
    const std::string who = "instance " + std::to_string(c.id.value);
    if (!listed.count(c.frame)) throw Error(who + " references unlisted frame " + std::to_string(c.frame));
    if (!ids.insert(c.id).second) throw Error(who + " appears more than once");
    if (c.roi != roi) throw Error(who + " has roi '" + c.roi + "' but the sequence is '" + roi + "'");
    if (c.mask.empty()) throw Error(who + " has no mask");
    if (c.mask.frame_size() != frame_size) throw Error(who + " has a mask for a different frame size");
  }
}

}  // namespace ipsc
