#pragma once

// JSON and CSV renderings of metric reports, plans, propagation results and
// forests, shared by the command line tool and the service.

#include <iosfwd>
#include <vector>

#include "ipsc/datastore.hpp"
#include "ipsc/metrics.hpp"
#include "ipsc/tracking.hpp"

namespace ipsc {

/// Pairs detector output with ground truth frame by frame, over the GT
/// frame list. Throws Error when ROIs differ or detections sit on frames the
/// GT does not list.
std::vector<FrameData> frame_data(const SequenceManifest& gt, const SequenceManifest& dets);

Json row_to_json(const MetricRow& row, const EvalConfig& cfg);
Json report_to_json(const EvaluationReport& r, const EvalConfig& cfg);
/// One line per frame and a final "all" line for the pooled row. Undefined
/// metrics are left empty.
void write_report_csv(const EvaluationReport& r, const EvalConfig& cfg, std::ostream& out);

Json plan_to_json(const SubsequencePlan& plan);

/// {"ok": true, "labels": [...], "uncategorizable": [...]} or
/// {"ok": false, "conflicts": [...]}.
Json propagation_to_json(const Propagation& p, const LineageForest& forest);

Json event_to_json(const TrackEvent& e);
Json proposal_to_json(const EventProposal& p);

/// Forest as the datastore records: header, cells, edges.
Json forest_records(const LineageForest& f);

}  // namespace ipsc
