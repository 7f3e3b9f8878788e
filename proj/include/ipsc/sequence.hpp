#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ipsc/types.hpp"

namespace ipsc {

enum class Provenance : std::uint8_t { Manual, Tracker, Detector };

std::string_view to_string(Provenance p);
Provenance parse_provenance(std::string_view text);

/// One ROI sequence: its frame list and every annotated instance.
struct SequenceManifest {
  std::string roi;
  FrameSize frame_size{};
  std::vector<FrameIndex> frames;
  std::vector<CellInstance> cells;
  Provenance provenance = Provenance::Manual;
  std::optional<Point> roi_origin;                // offset inside the full plate image, if known
  std::map<FrameIndex, std::string> frame_images;  // paths relative to the manifest file

  bool empty() const { return frames.empty() && cells.empty(); }
  /// Instances of one frame, ascending id.
  std::vector<CellInstance> cells_in(FrameIndex frame) const;
  std::map<FrameIndex, std::vector<CellInstance>> by_frame() const;
  /// Sorts cells by (frame, id).
  void canonicalize();
  /// Throws Error when frames are not strictly increasing, an instance
  /// references an unlisted frame, ids repeat, or ROI/frame size disagree.
  void validate() const;

  friend bool operator==(const SequenceManifest&, const SequenceManifest&) = default;
};

}  // namespace ipsc
