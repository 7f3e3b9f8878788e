#include "ipsc/types.hpp"

#include <algorithm>
#include <cctype>
#include <string>

namespace ipsc {

std::string_view to_string(Label label) {
  switch (label) {
    case Label::iPSC:
      return "iPSC";
    case Label::DfC:
      return "DfC";
    case Label::Unlabeled:
      break;
  }
  return "unlabeled";
}

Label parse_label(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "ipsc") return Label::iPSC;
  if (lower == "dfc") return Label::DfC;
  if (lower == "unlabeled" || lower.empty()) return Label::Unlabeled;
  throw Error("unknown label '" + std::string(text) + "'");
}

double CellInstance::ipsc_score() const {
  const double c = confidence.value_or(1.0);
  return label == Label::DfC ? 1.0 - c : c;
}

}  // namespace ipsc
