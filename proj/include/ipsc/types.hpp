#pragma once

// Core value types shared by every module: identifiers, labels, cell
// instances and the error hierarchy.

#include <compare>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "ipsc/error.hpp"
#include "ipsc/geometry.hpp"

namespace ipsc {

using FrameIndex = std::int64_t;

/// Strongly typed instance identifier (unique within one sequence file).
struct CellId {
  std::uint64_t value = 0;
  friend constexpr auto operator<=>(CellId, CellId) = default;
};

struct TrackId {
  std::uint64_t value = 0;
  friend constexpr auto operator<=>(TrackId, TrackId) = default;
};

enum class Label : std::uint8_t { Unlabeled, iPSC, DfC };

std::string_view to_string(Label label);
/// Accepts "iPSC", "DfC" and "unlabeled" (case-insensitive). Throws Error otherwise.
Label parse_label(std::string_view text);

/// One cell observation in one frame.
struct CellInstance {
  CellId id;
  FrameIndex frame = 0;
  std::string roi;
  Mask mask;
  Label label = Label::Unlabeled;
  std::optional<double> confidence;  // detector files only
  std::optional<TrackId> track;

  const BBox& bbox() const { return mask.bbox(); }
  Point centroid() const { return mask.centroid(); }

  /// Score for the iPSC class: the confidence for iPSC predictions,
  /// its complement for DfC predictions.
  double ipsc_score() const;

  friend bool operator==(const CellInstance&, const CellInstance&) = default;
};

}  // namespace ipsc

template <>
struct std::hash<ipsc::CellId> {
  std::size_t operator()(ipsc::CellId id) const noexcept { return std::hash<std::uint64_t>{}(id.value); }
};
