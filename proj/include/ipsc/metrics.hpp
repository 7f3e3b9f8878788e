#pragma once

// Detection evaluation: matching, the failure taxonomy, ROC / partial AUC,
// precision-recall, per-frame reports and subsequential-inference plans.

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ipsc/types.hpp"

namespace ipsc {

struct MatchParams {
  double match_iou = 0.5;
  double part_containment = 0.5;  // share of a det inside one labeled GT cell to count as PART
  friend bool operator==(const MatchParams&, const MatchParams&) = default;
};

struct MatchPair {
  CellId det;
  CellId gt;
  double iou = 0.0;
};

struct MatchResult {
  FrameIndex frame = 0;
  std::vector<MatchPair> matches;
  std::vector<CellId> unmatched_dets;  // ascending
  std::vector<CellId> unmatched_gts;   // ascending
};

/// Greedy one-to-one matching over pairs with iou >= match_iou, by iou
/// descending, then det id, then gt id. Class-agnostic.
MatchResult match_frame(std::span<const CellInstance> dets, std::span<const CellInstance> gts, double match_iou);

enum class Outcome : std::uint8_t {
  TP,
  FP_CLS,
  FP_DUP,
  FP_NEX_WHOLE,
  FP_NEX_PART,
  FN_CLS,
  FN_DET,
  TN,            // GT DfC matched by a DfC prediction
  DfcUnmatched,  // DfC prediction with no GT cell
  DfcMissed,     // GT DfC without any matching detection
};

inline constexpr std::size_t kOutcomeCount = 10;
std::string_view to_string(Outcome o);

struct TaxonomyEntry {
  std::optional<CellId> det;
  std::optional<CellId> gt;
  double score = 0.0;  // iPSC score of the detection, 0 without one
};

/// Every iPSC-predicted detection lands in exactly one of TP, FP-CLS,
/// FP-DUP, FP-NEX-WHOLE, FP-NEX-PART; every DfC-predicted one in FN-CLS, TN
/// or DfcUnmatched; every labeled GT cell in exactly one GT-side class.
struct FailureTaxonomy {
  FrameIndex frame = 0;
  std::array<std::vector<TaxonomyEntry>, kOutcomeCount> entries;

  const std::vector<TaxonomyEntry>& of(Outcome o) const { return entries[static_cast<std::size_t>(o)]; }
  std::vector<TaxonomyEntry>& of(Outcome o) { return entries[static_cast<std::size_t>(o)]; }
  std::size_t count(Outcome o) const { return of(o).size(); }
  std::size_t ipsc_detections() const;
  std::size_t gt_ipsc() const;
};

/// `mr` must come from match_frame over the same dets and the labeled
/// subset of `gts`. Throws Error for detections without an iPSC/DfC
/// prediction or a matched GT without a label.
FailureTaxonomy classify_failures(const MatchResult& mr, std::span<const CellInstance> gts,
                                  std::span<const CellInstance> dets, const MatchParams& p = {});

/// Matches against labeled GT cells only, then classifies.
FailureTaxonomy evaluate_frame(std::span<const CellInstance> dets, std::span<const CellInstance> gts,
                               const MatchParams& p = {});

struct RocSample {
  double score = 0.0;
  bool positive = false;  // GT iPSC
  friend auto operator<=>(const RocSample&, const RocSample&) = default;
};

/// Samples from TP and FN-CLS (positives) and FP-CLS and TN (negatives).
std::vector<RocSample> collect_roc_samples(std::span<const FailureTaxonomy> taxonomies);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;  // +inf for the first point
  std::int64_t fp = 0;
  std::int64_t tp = 0;
};

struct RocCurve {
  std::vector<RocPoint> points;  // from (0,0) to (1,1), thresholds descending
  std::int64_t positives = 0;
  std::int64_t negatives = 0;
  double auc = 0.0;
};

/// One operating point per unique score. Throws Error when a class is missing.
RocCurve roc_curve(std::span<const RocSample> samples);

struct PartialAuc {
  double fp_max = 0.0;
  double raw = 0.0;
  double normalized = 0.0;  // raw / fp_max
  double mcclish = 0.0;     // 0.5 (1 + (raw - min) / (max - min))
};

/// Area over FPR in [0, fp_max], interpolating linearly at the boundary.
/// Throws Error unless fp_max is in (0, 1].
PartialAuc partial_auc(const RocCurve& curve, double fp_max);

inline constexpr std::array<double, 3> kDefaultFpMaxima{0.001, 0.01, 0.1};

struct PrPoint {
  double recall = 0.0;
  double precision = 0.0;
  double threshold = 0.0;
};

struct PrCurve {
  std::vector<PrPoint> points;  // one per unique confidence, descending
  std::int64_t gt_positives = 0;
  std::int64_t true_positives = 0;
  std::int64_t detections = 0;
  double ap = 0.0;      // all-point interpolated
  double rp_auc = 0.0;  // raw trapezoid
};

/// One frame's detections and ground truth.
struct FrameData {
  FrameIndex frame = 0;
  std::vector<CellInstance> dets;
  std::vector<CellInstance> gts;
};

/// iPSC detection curve: iPSC-predicted detections ranked by confidence are
/// matched to GT iPSC cells of their frame (highest iou >= match_iou still
/// free). Throws Error without GT iPSC cells.
PrCurve pr_metrics(std::span<const FrameData> frames, double match_iou);

struct MetricRow {
  FrameIndex frame = 0;  // unused for pooled rows
  std::array<std::size_t, kOutcomeCount> counts{};
  std::size_t gt_ipsc = 0;
  std::size_t gt_dfc = 0;
  std::size_t detections = 0;
  std::optional<double> auc;
  std::vector<std::optional<PartialAuc>> pauc;  // one per fp maximum
  std::optional<double> ap;
  std::optional<double> rp_auc;
  std::optional<double> fn_det_rate;  // FN-DET / GT iPSC
  std::optional<double> fp_dup_rate;  // FP-DUP / iPSC detections
  std::optional<double> fp_nex_rate;  // FP-NEX / iPSC detections
};

struct EvalConfig {
  MatchParams match;
  std::vector<double> fp_maxima{kDefaultFpMaxima.begin(), kDefaultFpMaxima.end()};
  unsigned jobs = 1;
};

/// Metrics pooled over the given frames. Undefined values stay empty.
MetricRow summarize(std::span<const FrameData> frames, std::span<const FailureTaxonomy> taxonomies,
                    const EvalConfig& cfg);

struct EvaluationReport {
  std::vector<MetricRow> frames;
  MetricRow pooled;
  std::vector<FailureTaxonomy> taxonomies;
};

/// Per-frame rows plus the pooled row. Frames are evaluated independently
/// (in parallel up to cfg.jobs) and reduced in frame order.
EvaluationReport frame_wise_report(std::span<const FrameData> frames, const EvalConfig& cfg);

struct SubsequencePlan {
  enum class Mode : std::uint8_t { Incremental, Fixed };
  Mode mode = Mode::Incremental;
  std::size_t k = 0;  // chunk size for Fixed
  std::vector<std::vector<FrameIndex>> subsequences;
  std::vector<std::vector<FrameIndex>> targets;
};

/// Incremental when k is empty, fixed(k) otherwise. Throws Error for an
/// empty frame list, unordered frames or k == 0.
SubsequencePlan subsequence_plan(std::span<const FrameIndex> frames, std::optional<std::size_t> k);

/// Splits the ordered frame list so that each breakpoint starts a new run.
/// Throws Error for a breakpoint outside [front, back].
std::vector<std::vector<FrameIndex>> split_on_discontinuity(std::span<const FrameIndex> frames,
                                                            std::span<const FrameIndex> breakpoints);

}  // namespace ipsc
