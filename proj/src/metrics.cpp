#include "ipsc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <tuple>
#include <unordered_map>

#include "ipsc/parallel.hpp"

namespace ipsc {

namespace {

bool labeled(const CellInstance& c) { return c.label != Label::Unlabeled; }

void check_match_iou(double match_iou) {
  if (!(match_iou > 0.0 && match_iou <= 1.0)) throw Error("match_iou must lie in (0, 1]");
}

template <class Map>
const CellInstance& lookup(const Map& m, CellId id, const char* what) {
  auto it = m.find(id);
  if (it == m.end()) throw NotFoundError(std::string(what) + " " + std::to_string(id.value) + " is not in the frame");
  return *it->second;
}

std::unordered_map<CellId, const CellInstance*> by_id(std::span<const CellInstance> cells) {
  std::unordered_map<CellId, const CellInstance*> m;
  for (const CellInstance& c : cells) m[c.id] = &c;
  return m;
}

}  // namespace

std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::TP:
      return "TP";
    case Outcome::FP_CLS:
      return "FP-CLS";
    case Outcome::FP_DUP:
      return "FP-DUP";
    case Outcome::FP_NEX_WHOLE:
      return "FP-NEX-WHOLE";
    case Outcome::FP_NEX_PART:
      return "FP-NEX-PART";
    case Outcome::FN_CLS:
      return "FN-CLS";
    case Outcome::FN_DET:
      return "FN-DET";
    case Outcome::TN:
      return "TN";
    case Outcome::DfcUnmatched:
      return "DfC-unmatched";
    case Outcome::DfcMissed:
      return "DfC-missed";
  }
  return "TP";
}

std::size_t FailureTaxonomy::ipsc_detections() const {
  return count(Outcome::TP) + count(Outcome::FP_CLS) + count(Outcome::FP_DUP) + count(Outcome::FP_NEX_WHOLE) +
         count(Outcome::FP_NEX_PART);
}

std::size_t FailureTaxonomy::gt_ipsc() const {
  return count(Outcome::TP) + count(Outcome::FN_CLS) + count(Outcome::FN_DET);
}

MatchResult match_frame(std::span<const CellInstance> dets, std::span<const CellInstance> gts, double match_iou) {
  check_match_iou(match_iou);
  std::vector<MatchPair> pairs;
  for (const CellInstance& d : dets) {
    for (const CellInstance& g : gts) {
      if (!d.bbox().intersects(g.bbox())) continue;
      const double v = iou(d.mask, g.mask);
      if (v >= match_iou) pairs.push_back({d.id, g.id, v});
    }
  }
  std::sort(pairs.begin(), pairs.end(), [](const MatchPair& a, const MatchPair& b) {
    if (a.iou != b.iou) return a.iou > b.iou;
    if (a.det != b.det) return a.det < b.det;
    return a.gt < b.gt;
  });
  MatchResult r;
  if (!gts.empty()) r.frame = gts.front().frame;
  else if (!dets.empty()) r.frame = dets.front().frame;
  std::set<CellId> used_d, used_g;
  for (const MatchPair& p : pairs) {
    if (used_d.count(p.det) || used_g.count(p.gt)) continue;
    used_d.insert(p.det);
    used_g.insert(p.gt);
    r.matches.push_back(p);
  }
  for (const CellInstance& d : dets)
    if (!used_d.count(d.id)) r.unmatched_dets.push_back(d.id);
  for (const CellInstance& g : gts)
    if (!used_g.count(g.id)) r.unmatched_gts.push_back(g.id);
  std::sort(r.unmatched_dets.begin(), r.unmatched_dets.end());
  std::sort(r.unmatched_gts.begin(), r.unmatched_gts.end());
  return r;
}

FailureTaxonomy classify_failures(const MatchResult& mr, std::span<const CellInstance> gts,
                                  std::span<const CellInstance> dets, const MatchParams& p) {
  check_match_iou(p.match_iou);
  const auto det_of = by_id(dets);
  const auto gt_of = by_id(gts);
  for (const CellInstance& d : dets)
    if (!labeled(d))
      throw Error("detection " + std::to_string(d.id.value) + " at frame " + std::to_string(d.frame) +
                  " has no predicted class");

  FailureTaxonomy t;
  t.frame = mr.frame;
  std::vector<const CellInstance*> matched_ipsc, matched_dfc;
  for (const MatchPair& m : mr.matches) {
    const CellInstance& d = lookup(det_of, m.det, "detection");
    const CellInstance& g = lookup(gt_of, m.gt, "GT cell");
    if (!labeled(g)) throw Error("matched GT cell " + std::to_string(g.id.value) + " has no label");
    const bool pred_ipsc = d.label == Label::iPSC;
    const TaxonomyEntry e{d.id, g.id, d.ipsc_score()};
    if (g.label == Label::iPSC) {
      t.of(pred_ipsc ? Outcome::TP : Outcome::FN_CLS).push_back(e);
      matched_ipsc.push_back(&g);
    } else {
      t.of(pred_ipsc ? Outcome::FP_CLS : Outcome::TN).push_back(e);
      matched_dfc.push_back(&g);
    }
  }

  auto best_overlap = [](const CellInstance& d, const std::vector<const CellInstance*>& pool) {
    std::pair<double, const CellInstance*> best{0.0, nullptr};
    for (const CellInstance* g : pool) {
      if (!d.bbox().intersects(g->bbox())) continue;
      const double v = iou(d.mask, g->mask);
      if (v > best.first || (v == best.first && best.second && g->id < best.second->id)) best = {v, g};
    }
    return best;
  };

  for (CellId id : mr.unmatched_dets) {
    const CellInstance& d = lookup(det_of, id, "detection");
    if (d.label == Label::DfC) {
      t.of(Outcome::DfcUnmatched).push_back({d.id, std::nullopt, d.ipsc_score()});
      continue;
    }
    if (auto [v, g] = best_overlap(d, matched_ipsc); g && v >= p.match_iou) {
      t.of(Outcome::FP_DUP).push_back({d.id, g->id, d.ipsc_score()});
      continue;
    }
    if (auto [v, g] = best_overlap(d, matched_dfc); g && v >= p.match_iou) {
      t.of(Outcome::FP_CLS).push_back({d.id, g->id, d.ipsc_score()});
      continue;
    }
    // No GT cell: a fragment of a labeled cell or something else entirely.
    const CellInstance* host = nullptr;
    double host_share = 0.0;
    for (const CellInstance& g : gts) {
      if (!labeled(g) || !d.bbox().intersects(g.bbox())) continue;
      const double share =
          static_cast<double>(intersection_area(d.mask, g.mask)) / static_cast<double>(d.mask.area());
      if (share > host_share) {
        host_share = share;
        host = &g;
      }
    }
    if (host && host_share >= p.part_containment)
      t.of(Outcome::FP_NEX_PART).push_back({d.id, host->id, d.ipsc_score()});
    else
      t.of(Outcome::FP_NEX_WHOLE).push_back({d.id, std::nullopt, d.ipsc_score()});
  }

  for (CellId id : mr.unmatched_gts) {
    const CellInstance& g = lookup(gt_of, id, "GT cell");
    if (g.label == Label::iPSC) t.of(Outcome::FN_DET).push_back({std::nullopt, g.id, 0.0});
    else if (g.label == Label::DfC) t.of(Outcome::DfcMissed).push_back({std::nullopt, g.id, 0.0});
  }

  for (auto& v : t.entries)
    std::sort(v.begin(), v.end(), [](const TaxonomyEntry& a, const TaxonomyEntry& b) {
      return std::tie(a.det, a.gt) < std::tie(b.det, b.gt);
    });
  return t;
}

FailureTaxonomy evaluate_frame(std::span<const CellInstance> dets, std::span<const CellInstance> gts,
                               const MatchParams& p) {
  std::vector<CellInstance> labeled_gts;
  for (const CellInstance& g : gts)
    if (labeled(g)) labeled_gts.push_back(g);
  MatchResult mr = match_frame(dets, labeled_gts, p.match_iou);
  if (!gts.empty()) mr.frame = gts.front().frame;
  return classify_failures(mr, gts, dets, p);
}

std::vector<RocSample> collect_roc_samples(std::span<const FailureTaxonomy> taxonomies) {
  std::vector<RocSample> out;
  for (const FailureTaxonomy& t : taxonomies) {
    for (const auto& e : t.of(Outcome::TP)) out.push_back({e.score, true});
    for (const auto& e : t.of(Outcome::FN_CLS)) out.push_back({e.score, true});
    for (const auto& e : t.of(Outcome::FP_CLS)) out.push_back({e.score, false});
    for (const auto& e : t.of(Outcome::TN)) out.push_back({e.score, false});
  }
  return out;
}

RocCurve roc_curve(std::span<const RocSample> samples) {
  RocCurve c;
  for (const RocSample& s : samples) {
    if (std::isnan(s.score)) throw Error("ROC sample with NaN score");
    (s.positive ? c.positives : c.negatives) += 1;
  }
  if (c.positives == 0 || c.negatives == 0)
    throw Error("ROC curve needs positive and negative samples (got " + std::to_string(c.positives) + " and " +
                std::to_string(c.negatives) + ")");
  std::vector<RocSample> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end(), [](const RocSample& a, const RocSample& b) { return a.score > b.score; });

  const double P = static_cast<double>(c.positives), N = static_cast<double>(c.negatives);
  c.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity(), 0, 0});
  std::int64_t tp = 0, fp = 0;
  // Twice the area above the curve, in (fp count) x (tp count) units.
  std::int64_t deficit2 = 0;
  for (std::size_t i = 0; i < sorted.size();) {
    const double score = sorted[i].score;
    const std::int64_t fp0 = fp, tp0 = tp;
    for (; i < sorted.size() && sorted[i].score == score; ++i) (sorted[i].positive ? tp : fp) += 1;
    deficit2 += (fp - fp0) * (2 * c.positives - tp - tp0);
    c.points.push_back({static_cast<double>(fp) / N, static_cast<double>(tp) / P, score, fp, tp});
  }
  c.auc = 1.0 - static_cast<double>(deficit2) / (2.0 * P * N);
  return c;
}

PartialAuc partial_auc(const RocCurve& curve, double fp_max) {
  if (!(fp_max > 0.0 && fp_max <= 1.0)) throw Error("partial AUC fp_max must lie in (0, 1]");
  if (curve.points.empty() || curve.positives == 0 || curve.negatives == 0) throw Error("partial AUC of an empty curve");
  // Integrate the gap between the curve and TPR = 1 so that a curve hugging
  // the top edge gives exactly fp_max, and fp_max = 1 reproduces the AUC.
  std::int64_t deficit2 = 0;
  double boundary = 0.0;
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    const RocPoint& a = curve.points[i - 1];
    const RocPoint& b = curve.points[i];
    if (b.fpr <= fp_max) {
      deficit2 += (b.fp - a.fp) * (2 * curve.positives - b.tp - a.tp);
      continue;
    }
    if (a.fpr < fp_max) {
      const double yb = a.tpr + (b.tpr - a.tpr) * (fp_max - a.fpr) / (b.fpr - a.fpr);
      boundary = (fp_max - a.fpr) * (2.0 - a.tpr - yb) / 2.0;
    }
    break;
  }
  const double P = static_cast<double>(curve.positives), N = static_cast<double>(curve.negatives);
  PartialAuc r;
  r.fp_max = fp_max;
  r.raw = fp_max - static_cast<double>(deficit2) / (2.0 * P * N) - boundary;
  r.normalized = r.raw / fp_max;
  const double lo = fp_max * fp_max / 2.0;
  r.mcclish = 0.5 * (1.0 + (r.raw - lo) / (fp_max - lo));
  return r;
}

PrCurve pr_metrics(std::span<const FrameData> frames, double match_iou) {
  check_match_iou(match_iou);
  struct Ranked {
    double confidence;
    bool tp;
  };
  std::vector<Ranked> ranked;
  PrCurve c;
  for (const FrameData& f : frames) {
    std::vector<const CellInstance*> gts;
    for (const CellInstance& g : f.gts)
      if (g.label == Label::iPSC) gts.push_back(&g);
    c.gt_positives += static_cast<std::int64_t>(gts.size());
    std::vector<const CellInstance*> dets;
    for (const CellInstance& d : f.dets)
      if (d.label == Label::iPSC) dets.push_back(&d);
    std::sort(dets.begin(), dets.end(), [](const CellInstance* a, const CellInstance* b) {
      const double ca = a->confidence.value_or(1.0), cb = b->confidence.value_or(1.0);
      return ca != cb ? ca > cb : a->id < b->id;
    });
    std::vector<bool> taken(gts.size(), false);
    for (const CellInstance* d : dets) {
      std::size_t best = gts.size();
      double best_iou = match_iou;
      for (std::size_t j = 0; j < gts.size(); ++j) {
        if (taken[j] || !d->bbox().intersects(gts[j]->bbox())) continue;
        const double v = iou(d->mask, gts[j]->mask);
        if (v > best_iou || (v == best_iou && (best == gts.size() || gts[j]->id < gts[best]->id))) {
          best_iou = v;
          best = j;
        }
      }
      if (best < gts.size()) taken[best] = true;
      ranked.push_back({d->confidence.value_or(1.0), best < gts.size()});
    }
  }
  if (c.gt_positives == 0) throw Error("precision-recall needs at least one GT iPSC cell");
  c.detections = static_cast<std::int64_t>(ranked.size());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const Ranked& a, const Ranked& b) { return a.confidence > b.confidence; });

  std::int64_t tp = 0, n = 0;
  for (std::size_t i = 0; i < ranked.size();) {
    const double conf = ranked[i].confidence;
    for (; i < ranked.size() && ranked[i].confidence == conf; ++i, ++n) tp += ranked[i].tp ? 1 : 0;
    c.points.push_back({static_cast<double>(tp) / static_cast<double>(c.gt_positives),
                        static_cast<double>(tp) / static_cast<double>(n), conf});
  }
  c.true_positives = tp;

  std::vector<double> envelope(c.points.size());
  double running = 0.0;
  for (std::size_t i = c.points.size(); i-- > 0;) {
    running = std::max(running, c.points[i].precision);
    envelope[i] = running;
  }
  double prev_r = 0.0, prev_p = c.points.empty() ? 0.0 : c.points.front().precision;
  for (std::size_t i = 0; i < c.points.size(); ++i) {
    const double dr = c.points[i].recall - prev_r;
    c.ap += dr * envelope[i];
    c.rp_auc += dr * (c.points[i].precision + prev_p) / 2.0;
    prev_r = c.points[i].recall;
    prev_p = c.points[i].precision;
  }
  return c;
}

MetricRow summarize(std::span<const FrameData> frames, std::span<const FailureTaxonomy> taxonomies,
                    const EvalConfig& cfg) {
  MetricRow row;
  if (frames.size() == 1) row.frame = frames.front().frame;
  for (const FrameData& f : frames) {
    row.detections += f.dets.size();
    for (const CellInstance& g : f.gts) {
      if (g.label == Label::iPSC) ++row.gt_ipsc;
      if (g.label == Label::DfC) ++row.gt_dfc;
    }
  }
  std::size_t ipsc_dets = 0;
  for (const FailureTaxonomy& t : taxonomies) {
    for (std::size_t k = 0; k < kOutcomeCount; ++k) row.counts[k] += t.entries[k].size();
    ipsc_dets += t.ipsc_detections();
  }
  const auto count = [&](Outcome o) { return static_cast<double>(row.counts[static_cast<std::size_t>(o)]); };

  const auto samples = collect_roc_samples(taxonomies);
  const bool both = std::any_of(samples.begin(), samples.end(), [](const RocSample& s) { return s.positive; }) &&
                    std::any_of(samples.begin(), samples.end(), [](const RocSample& s) { return !s.positive; });
  row.pauc.assign(cfg.fp_maxima.size(), std::nullopt);
  if (both) {
    const RocCurve curve = roc_curve(samples);
    row.auc = curve.auc;
    for (std::size_t i = 0; i < cfg.fp_maxima.size(); ++i) row.pauc[i] = partial_auc(curve, cfg.fp_maxima[i]);
  }
  if (row.gt_ipsc > 0) {
    const PrCurve pr = pr_metrics(frames, cfg.match.match_iou);
    row.ap = pr.ap;
    row.rp_auc = pr.rp_auc;
    row.fn_det_rate = count(Outcome::FN_DET) / static_cast<double>(row.gt_ipsc);
  }
  if (ipsc_dets > 0) {
    row.fp_dup_rate = count(Outcome::FP_DUP) / static_cast<double>(ipsc_dets);
    row.fp_nex_rate = (count(Outcome::FP_NEX_WHOLE) + count(Outcome::FP_NEX_PART)) / static_cast<double>(ipsc_dets);
  }
  return row;
}

EvaluationReport frame_wise_report(std::span<const FrameData> frames, const EvalConfig& cfg) {
  EvaluationReport r;
  r.taxonomies = parallel_map(frames.size(), cfg.jobs, [&](std::size_t i) {
    FailureTaxonomy t = evaluate_frame(frames[i].dets, frames[i].gts, cfg.match);
    t.frame = frames[i].frame;
    return t;
  });
  r.frames = parallel_map(frames.size(), cfg.jobs, [&](std::size_t i) {
    return summarize(frames.subspan(i, 1), std::span<const FailureTaxonomy>(&r.taxonomies[i], 1), cfg);
  });
  r.pooled = summarize(frames, r.taxonomies, cfg);
  return r;
}

SubsequencePlan subsequence_plan(std::span<const FrameIndex> frames, std::optional<std::size_t> k) {
  if (frames.empty()) throw Error("subsequence plan needs at least one frame");
  for (std::size_t i = 1; i < frames.size(); ++i)
    if (frames[i] <= frames[i - 1]) throw Error("subsequence plan: frames must be strictly increasing");
  SubsequencePlan plan;
  if (!k) {
    plan.mode = SubsequencePlan::Mode::Incremental;
    for (std::size_t n = 1; n <= frames.size(); ++n) {
      plan.subsequences.emplace_back(frames.begin(), frames.begin() + static_cast<std::ptrdiff_t>(n));
      plan.targets.push_back({frames[n - 1]});
    }
    return plan;
  }
  if (*k == 0) throw Error("subsequence plan: chunk size must be >= 1");
  plan.mode = SubsequencePlan::Mode::Fixed;
  plan.k = *k;
  for (std::size_t start = 0; start < frames.size(); start += *k) {
    const std::size_t end = std::min(frames.size(), start + *k);
    plan.subsequences.emplace_back(frames.begin() + static_cast<std::ptrdiff_t>(start),
                                   frames.begin() + static_cast<std::ptrdiff_t>(end));
    plan.targets.push_back(plan.subsequences.back());
  }
  return plan;
}

std::vector<std::vector<FrameIndex>> split_on_discontinuity(std::span<const FrameIndex> frames,
                                                            std::span<const FrameIndex> breakpoints) {
  if (frames.empty()) {
    if (!breakpoints.empty()) throw Error("breakpoint given for an empty frame list");
    return {};
  }
  std::set<FrameIndex> cuts;
  for (FrameIndex b : breakpoints) {
    if (b < frames.front() || b > frames.back())
      throw Error("breakpoint " + std::to_string(b) + " lies outside frames " + std::to_string(frames.front()) + "-" +
                  std::to_string(frames.back()));
    cuts.insert(b);
  }
  std::vector<std::vector<FrameIndex>> runs(1);
  auto next_cut = cuts.begin();
  for (FrameIndex f : frames) {
    bool cut = false;
    while (next_cut != cuts.end() && *next_cut <= f) {
      cut = true;
      ++next_cut;
    }
    if (cut && !runs.back().empty()) runs.emplace_back();
    runs.back().push_back(f);
  }
  return runs;
}

}  // namespace ipsc
