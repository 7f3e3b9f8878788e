#include "ipsc/report.hpp"

#include <ostream>
#include <set>
#include <sstream>

namespace ipsc {

std::vector<FrameData> frame_data(const SequenceManifest& gt, const SequenceManifest& dets) {
  if (!dets.empty() && dets.roi != gt.roi)
    throw Error("detections are for ROI '" + dets.roi + "' but ground truth is '" + gt.roi + "'");
  const std::set<FrameIndex> known(gt.frames.begin(), gt.frames.end());
  auto gt_by = gt.by_frame();
  auto det_by = dets.by_frame();
  for (const auto& [frame, cells] : det_by)
    if (!known.count(frame))
      throw Error("detections reference frame " + std::to_string(frame) + " missing from the ground truth");
  std::vector<FrameData> out;
  out.reserve(gt.frames.size());
  for (FrameIndex f : gt.frames) {
    FrameData d;
    d.frame = f;
    if (auto it = det_by.find(f); it != det_by.end()) d.dets = std::move(it->second);
    if (auto it = gt_by.find(f); it != gt_by.end()) d.gts = std::move(it->second);
    out.push_back(std::move(d));
  }
  return out;
}

namespace {

Json opt(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

std::string csv_opt(const std::optional<double>& v) { return v ? format_number(*v) : std::string(); }

}  // namespace

Json row_to_json(const MetricRow& row, const EvalConfig& cfg) {
  Json j;
  j["frame"] = row.frame;
  Json counts;
  for (std::size_t k = 0; k < kOutcomeCount; ++k) counts[std::string(to_string(static_cast<Outcome>(k)))] = row.counts[k];
  j["counts"] = counts;
  j["gt_ipsc"] = row.gt_ipsc;
  j["gt_dfc"] = row.gt_dfc;
  j["detections"] = row.detections;
  j["auc"] = opt(row.auc);
  Json pauc = Json::array();
  for (std::size_t i = 0; i < cfg.fp_maxima.size(); ++i) {
    Json p;
    p["fp_max"] = cfg.fp_maxima[i];
    const auto& v = i < row.pauc.size() ? row.pauc[i] : std::optional<PartialAuc>();
    p["raw"] = v ? Json(v->raw) : Json(nullptr);
    p["normalized"] = v ? Json(v->normalized) : Json(nullptr);
    p["mcclish"] = v ? Json(v->mcclish) : Json(nullptr);
    pauc.push_back(p);
  }
  j["pauc"] = pauc;
  j["ap"] = opt(row.ap);
  j["rp_auc"] = opt(row.rp_auc);
  j["fn_det_rate"] = opt(row.fn_det_rate);
  j["fp_dup_rate"] = opt(row.fp_dup_rate);
  j["fp_nex_rate"] = opt(row.fp_nex_rate);
  return j;
}

Json report_to_json(const EvaluationReport& r, const EvalConfig& cfg) {
  Json j;
  Json pooled = row_to_json(r.pooled, cfg);
  pooled.erase("frame");
  j["pooled"] = pooled;
  Json frames = Json::array();
  for (const MetricRow& row : r.frames) frames.push_back(row_to_json(row, cfg));
  j["frames"] = frames;
  return j;
}

void write_report_csv(const EvaluationReport& r, const EvalConfig& cfg, std::ostream& out) {
  out << "frame";
  for (std::size_t k = 0; k < kOutcomeCount; ++k) out << ',' << to_string(static_cast<Outcome>(k));
  out << ",gt_ipsc,gt_dfc,detections,auc";
  for (double f : cfg.fp_maxima) {
    const std::string s = format_number(f);
    out << ",pauc_raw@" << s << ",pauc_norm@" << s << ",pauc_mcclish@" << s;
  }
  out << ",ap,rp_auc,fn_det_rate,fp_dup_rate,fp_nex_rate\n";
  auto line = [&](const std::string& frame, const MetricRow& row) {
    out << frame;
    for (std::size_t n : row.counts) out << ',' << n;
    out << ',' << row.gt_ipsc << ',' << row.gt_dfc << ',' << row.detections << ',' << csv_opt(row.auc);
    for (std::size_t i = 0; i < cfg.fp_maxima.size(); ++i) {
      const auto& v = i < row.pauc.size() ? row.pauc[i] : std::optional<PartialAuc>();
      if (v)
        out << ',' << format_number(v->raw) << ',' << format_number(v->normalized) << ','
            << format_number(v->mcclish);
      else
        out << ",,,";
    }
    out << ',' << csv_opt(row.ap) << ',' << csv_opt(row.rp_auc) << ',' << csv_opt(row.fn_det_rate) << ','
        << csv_opt(row.fp_dup_rate) << ',' << csv_opt(row.fp_nex_rate) << '\n';
  };
  for (const MetricRow& row : r.frames) line(std::to_string(row.frame), row);
  line("all", r.pooled);
}

Json plan_to_json(const SubsequencePlan& plan) {
  Json j;
  j["mode"] = plan.mode == SubsequencePlan::Mode::Incremental ? "incremental" : "fixed";
  if (plan.mode == SubsequencePlan::Mode::Fixed) j["k"] = plan.k;
  j["count"] = plan.subsequences.size();
  Json subs = Json::array();
  for (std::size_t i = 0; i < plan.subsequences.size(); ++i)
    subs.push_back({{"frames", plan.subsequences[i]}, {"targets", plan.targets[i]}});
  j["subsequences"] = subs;
  return j;
}

Json propagation_to_json(const Propagation& p, const LineageForest& forest) {
  Json j;
  j["ok"] = p.ok();
  if (p.ok()) {
    Json labels = Json::array();
    for (const auto& [id, c] : p.labeled->nodes) labels.push_back({{"id", id.value}, {"label", to_string(c.label)}});
    j["labels"] = labels;
    Json lost = Json::array();
    for (CellId id : find_uncategorizable(forest)) lost.push_back(id.value);
    j["uncategorizable"] = lost;
    return j;
  }
  Json conflicts = Json::array();
  for (const Conflict& c : p.conflicts) {
    Json labels = Json::array();
    for (Label l : c.labels) labels.push_back(to_string(l));
    Json seeds = Json::array();
    for (CellId s : c.seeds) seeds.push_back(s.value);
    conflicts.push_back({{"node", c.node.value}, {"labels", labels}, {"seeds", seeds}});
  }
  j["conflicts"] = conflicts;
  return j;
}

Json event_to_json(const TrackEvent& e) {
  Json earlier = Json::array(), later = Json::array();
  for (CellId id : e.earlier) earlier.push_back(id.value);
  for (CellId id : e.later) later.push_back(id.value);
  return {{"kind", to_string(e.kind)}, {"at_frame", e.at_frame}, {"earlier", earlier}, {"later", later}};
}

Json proposal_to_json(const EventProposal& p) {
  return {{"id", p.id}, {"score", p.score}, {"event", event_to_json(p.event)}};
}

Json forest_records(const LineageForest& f) {
  std::stringstream ss;
  save_forest(f, ss);
  Json out = Json::array();
  for (std::string line; std::getline(ss, line);)
    if (!line.empty()) out.push_back(Json::parse(line));
  return out;
}

}  // namespace ipsc
