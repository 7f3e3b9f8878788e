#include <gtest/gtest.h>

#include <limits>

#include "ipsc/metrics.hpp"
#include "ipsc/report.hpp"
#include "ipsc/simulator.hpp"
#include "support.hpp"

using namespace ipsc;
using namespace ipsc::testing;

namespace {

std::size_t n(const FailureTaxonomy& t, Outcome o) { return t.count(o); }

// Random scene: labeled and unlabeled GT boxes, detections that copy,
// shift, shrink or ignore them, with random predicted classes.
FrameData random_scene(Rng& rng) {
  std::uniform_real_distribution<double> pos(0, 220), size(6, 30), u(0, 1);
  std::uniform_int_distribution<int> shift(-6, 6);
  FrameData f;
  f.frame = 1;
  const int gts = std::uniform_int_distribution<int>(0, 12)(rng);
  for (int i = 0; i < gts; ++i) {
    const double r = u(rng);
    const Label l = r < 0.4 ? Label::iPSC : r < 0.8 ? Label::DfC : Label::Unlabeled;
    f.gts.push_back(rect_cell(i + 1, 1, std::floor(pos(rng)), std::floor(pos(rng)), std::floor(size(rng)),
                              std::floor(size(rng)), l));
  }
  std::uint64_t id = 1;
  auto det = [&](CellInstance c) {
    c.id = CellId{id++};
    c.label = u(rng) < 0.55 ? Label::iPSC : Label::DfC;
    c.confidence = std::round((0.5 + 0.5 * u(rng)) * 100) / 100;
    f.dets.push_back(std::move(c));
  };
  for (const CellInstance& g : f.gts) {
    const int copies = std::uniform_int_distribution<int>(0, 2)(rng);
    for (int k = 0; k < copies; ++k) {
      const BBox& b = g.bbox();
      const double x = std::clamp<double>(b.x_min + shift(rng), 0, 250 - b.width());
      const double y = std::clamp<double>(b.y_min + shift(rng), 0, 250 - b.height());
      const double sx = u(rng) < 0.2 ? 0.5 : 1.0;
      det(rect_cell(0, 1, x, y, std::max(2.0, b.width() * sx), b.height()));
    }
  }
  const int stray = std::uniform_int_distribution<int>(0, 4)(rng);
  for (int k = 0; k < stray; ++k)
    det(rect_cell(0, 1, std::floor(pos(rng)), std::floor(pos(rng)), std::floor(size(rng)), std::floor(size(rng))));
  return f;
}

}  // namespace

// ---- ROC ------------------------------------------------------------------

TEST(Roc, TrapezoidEqualsConcordance) {
  Rng rng(99);
  for (int trial = 0; trial < 300; ++trial) {
    const auto s = random_scores(rng, 500);
    const RocCurve c = roc_curve(s);
    ASSERT_NEAR(c.auc, concordance_auc(s), 1e-9) << "trial " << trial;
  }
}

TEST(Roc, CurveShape) {
  Rng rng(5);
  const auto s = random_scores(rng, 200);
  const RocCurve c = roc_curve(s);
  ASSERT_GE(c.points.size(), 2u);
  EXPECT_EQ(c.points.front().fpr, 0.0);
  EXPECT_EQ(c.points.front().tpr, 0.0);
  EXPECT_EQ(c.points.front().threshold, std::numeric_limits<double>::infinity());
  EXPECT_EQ(c.points.back().fpr, 1.0);
  EXPECT_EQ(c.points.back().tpr, 1.0);
  for (std::size_t i = 1; i < c.points.size(); ++i) {
    EXPECT_GE(c.points[i].fpr, c.points[i - 1].fpr);
    EXPECT_GE(c.points[i].tpr, c.points[i - 1].tpr);
    EXPECT_LT(c.points[i].threshold, c.points[i - 1].threshold);
  }
}

TEST(Roc, HandComputedTies) {
  // Positives 0.9, 0.5; negatives 0.5, 0.1: concordance (1 + 1 + 0.5 + 1) / 4.
  const std::vector<RocSample> s{{0.9, true}, {0.5, true}, {0.5, false}, {0.1, false}};
  EXPECT_DOUBLE_EQ(roc_curve(s).auc, 0.875);
}

TEST(Roc, NeedsBothClasses) {
  const std::vector<RocSample> s{{0.9, true}, {0.5, true}};
  EXPECT_THROW(roc_curve(s), Error);
}

TEST(PartialAuc, FullRangeEqualsAucExactly) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const RocCurve c = roc_curve(random_scores(rng, 300));
    const PartialAuc p = partial_auc(c, 1.0);
    ASSERT_EQ(p.raw, c.auc);
    ASSERT_EQ(p.normalized, c.auc);
  }
}

TEST(PartialAuc, PerfectClassifierNormalizesToOne) {
  std::vector<RocSample> s;
  for (int i = 0; i < 37; ++i) s.push_back({0.6 + i * 0.01, true});
  for (int i = 0; i < 1234; ++i) s.push_back({0.5 - i * 1e-4, false});
  const RocCurve c = roc_curve(s);
  for (double fp : kDefaultFpMaxima) {
    const PartialAuc p = partial_auc(c, fp);
    EXPECT_EQ(p.normalized, 1.0) << fp;
    EXPECT_EQ(p.mcclish, 1.0) << fp;
  }
}

TEST(PartialAuc, BoundsAndInterpolation) {
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const RocCurve c = roc_curve(random_scores(rng, 300));
    for (double fp : {0.001, 0.01, 0.1, 0.37}) {
      const PartialAuc p = partial_auc(c, fp);
      ASSERT_GE(p.raw, 0.0);
      ASSERT_LE(p.raw, std::min(fp, c.auc) + 1e-12);
      ASSERT_GE(p.normalized, 0.0);
      ASSERT_LE(p.normalized, 1.0 + 1e-12);
    }
  }
  // Chance line: raw = fp²/2, McClish = 0.5.
  const std::vector<RocSample> chance{{0.5, true}, {0.5, false}};
  const PartialAuc p = partial_auc(roc_curve(chance), 0.1);
  EXPECT_NEAR(p.raw, 0.005, 1e-15);
  EXPECT_NEAR(p.mcclish, 0.5, 1e-12);
  EXPECT_THROW(partial_auc(roc_curve(chance), 0.0), Error);
  EXPECT_THROW(partial_auc(roc_curve(chance), 1.5), Error);
}

TEST(PartialAuc, StepCurveHandValue) {
  // Scores: P 0.9, N 0.8, P 0.7, N 0.6. Curve (0,0) (0,.5) (.5,.5) (.5,1) (1,1).
  const std::vector<RocSample> s{{0.9, true}, {0.8, false}, {0.7, true}, {0.6, false}};
  const RocCurve c = roc_curve(s);
  EXPECT_DOUBLE_EQ(c.auc, 0.75);
  EXPECT_DOUBLE_EQ(partial_auc(c, 0.25).raw, 0.125);
  EXPECT_DOUBLE_EQ(partial_auc(c, 0.5).raw, 0.25);
}

// ---- taxonomy ------------------------------------------------------------

TEST(Taxonomy, EachOutcomeOnAHandBuiltScene) {
  const std::vector<CellInstance> gts{
      rect_cell(1, 1, 10, 10, 20, 20, Label::iPSC),    // TP + FP-DUP
      rect_cell(2, 1, 60, 10, 20, 20, Label::iPSC),    // FN-CLS
      rect_cell(3, 1, 110, 10, 20, 20, Label::iPSC),   // FN-DET
      rect_cell(4, 1, 10, 60, 20, 20, Label::DfC),     // FP-CLS
      rect_cell(5, 1, 60, 60, 20, 20, Label::DfC),     // TN
      rect_cell(6, 1, 110, 60, 20, 20, Label::DfC),    // missed
      rect_cell(7, 1, 160, 60, 20, 20),                // unlabeled: FP-NEX-WHOLE target
      rect_cell(8, 1, 10, 120, 40, 40, Label::DfC),    // PART host
  };
  const std::vector<CellInstance> dets{
      rect_cell(1, 1, 10, 10, 20, 20, Label::iPSC, 0.9),  rect_cell(2, 1, 11, 10, 20, 20, Label::iPSC, 0.8),
      rect_cell(3, 1, 60, 10, 20, 20, Label::DfC, 0.7),   rect_cell(4, 1, 10, 60, 20, 20, Label::iPSC, 0.6),
      rect_cell(5, 1, 60, 60, 20, 20, Label::DfC, 0.9),   rect_cell(6, 1, 160, 60, 20, 20, Label::iPSC, 0.7),
      rect_cell(7, 1, 12, 122, 10, 10, Label::iPSC, 0.6), rect_cell(8, 1, 200, 200, 10, 10, Label::DfC, 0.6),
      rect_cell(9, 1, 8, 120, 40, 40, Label::DfC, 0.8),
  };
  const FailureTaxonomy t = evaluate_frame(dets, gts);
  EXPECT_EQ(n(t, Outcome::TP), 1u);
  EXPECT_EQ(n(t, Outcome::FP_DUP), 1u);
  EXPECT_EQ(n(t, Outcome::FN_CLS), 1u);
  EXPECT_EQ(n(t, Outcome::FN_DET), 1u);
  EXPECT_EQ(n(t, Outcome::FP_CLS), 1u);
  EXPECT_EQ(n(t, Outcome::TN), 2u);
  EXPECT_EQ(n(t, Outcome::DfcMissed), 1u);
  EXPECT_EQ(n(t, Outcome::FP_NEX_WHOLE), 1u);
  EXPECT_EQ(n(t, Outcome::FP_NEX_PART), 1u);
  EXPECT_EQ(n(t, Outcome::DfcUnmatched), 1u);
  EXPECT_EQ(t.of(Outcome::FP_NEX_PART).front().gt, CellId{8});
  EXPECT_EQ(t.of(Outcome::FN_CLS).front().score, 1.0 - 0.7);
}

TEST(Taxonomy, PartitionIdentitiesOnFuzzedScenes) {
  Rng rng(1234);
  for (int trial = 0; trial < 500; ++trial) {
    const FrameData f = random_scene(rng);
    const FailureTaxonomy t = evaluate_frame(f.dets, f.gts);
    std::size_t ipsc_dets = 0, gt_ipsc = 0, gt_dfc = 0;
    for (const auto& d : f.dets) ipsc_dets += d.label == Label::iPSC;
    for (const auto& g : f.gts) {
      gt_ipsc += g.label == Label::iPSC;
      gt_dfc += g.label == Label::DfC;
    }
    ASSERT_EQ(ipsc_dets, n(t, Outcome::TP) + n(t, Outcome::FP_CLS) + n(t, Outcome::FP_DUP) +
                             n(t, Outcome::FP_NEX_WHOLE) + n(t, Outcome::FP_NEX_PART));
    ASSERT_EQ(f.dets.size() - ipsc_dets, n(t, Outcome::FN_CLS) + n(t, Outcome::TN) + n(t, Outcome::DfcUnmatched));
    ASSERT_EQ(gt_ipsc, n(t, Outcome::TP) + n(t, Outcome::FN_CLS) + n(t, Outcome::FN_DET));
    // GT DfC cells matched by an iPSC prediction are the matched share of FP-CLS.
    std::vector<CellInstance> labeled;
    for (const auto& g : f.gts)
      if (g.label != Label::Unlabeled) labeled.push_back(g);
    const MatchResult mr = match_frame(f.dets, labeled, MatchParams{}.match_iou);
    std::size_t dfc_as_ipsc = 0;
    for (const MatchPair& m : mr.matches) {
      const auto& g = *std::find_if(labeled.begin(), labeled.end(), [&](const CellInstance& c) { return c.id == m.gt; });
      const auto& d = *std::find_if(f.dets.begin(), f.dets.end(), [&](const CellInstance& c) { return c.id == m.det; });
      dfc_as_ipsc += g.label == Label::DfC && d.label == Label::iPSC;
    }
    ASSERT_LE(dfc_as_ipsc, n(t, Outcome::FP_CLS));
    ASSERT_EQ(gt_dfc, n(t, Outcome::TN) + n(t, Outcome::DfcMissed) + dfc_as_ipsc) << "trial " << trial;
    ASSERT_EQ(t.ipsc_detections(), ipsc_dets);
    ASSERT_EQ(t.gt_ipsc(), gt_ipsc);
  }
}

TEST(Taxonomy, MatchingIgnoresUnlabeledGroundTruth) {
  const std::vector<CellInstance> gts{rect_cell(1, 1, 10, 10, 20, 20)};
  const std::vector<CellInstance> dets{rect_cell(1, 1, 10, 10, 20, 20, Label::iPSC, 0.9)};
  const FailureTaxonomy t = evaluate_frame(dets, gts);
  EXPECT_EQ(n(t, Outcome::FP_NEX_WHOLE), 1u);
}

TEST(Taxonomy, DetectionWithoutClassIsAnError) {
  const std::vector<CellInstance> gts{rect_cell(1, 1, 10, 10, 20, 20, Label::iPSC)};
  const std::vector<CellInstance> dets{rect_cell(1, 1, 10, 10, 20, 20)};
  EXPECT_THROW(evaluate_frame(dets, gts), Error);
}

TEST(Taxonomy, InjectedNoiseIsClassifiedAsTallied) {
  Rng rng(77);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 40; ++trial) {
    ScenarioConfig cfg;
    cfg.rng_seed = 1000 + trial;
    cfg.frame_count = 3;
    cfg.initial_cells = 15;
    const Scenario sc = generate_scenario(cfg);
    NoiseConfig noise;
    noise.rng_seed = trial + 1;
    noise.drop_prob = 0.3 * u(rng);
    noise.flip_prob = 0.3 * u(rng);
    noise.dup_prob = 0.3 * u(rng);
    noise.whole_rate = 2 * u(rng);
    noise.part_rate = 2 * u(rng);
    noise.jitter_px = static_cast<int>(3 * u(rng));
    const SyntheticDetections d = synthesize_detections(sc, noise);
    const EvaluationReport r = frame_wise_report(frame_data(sc.sequence, d.detections), EvalConfig{});
    for (std::size_t i = 0; i < r.taxonomies.size(); ++i)
      for (std::size_t k = 0; k < kOutcomeCount; ++k)
        ASSERT_EQ(r.taxonomies[i].entries[k].size(), d.injected[i].counts[k])
            << "trial " << trial << " frame " << i << " outcome " << to_string(static_cast<Outcome>(k));
  }
}

// ---- precision / recall ----------------------------------------------------

TEST(PrecisionRecall, HandComputedApAndRpAuc) {
  FrameData f;
  f.frame = 1;
  f.gts = {rect_cell(1, 1, 10, 10, 20, 20, Label::iPSC), rect_cell(2, 1, 60, 10, 20, 20, Label::iPSC)};
  f.dets = {rect_cell(1, 1, 10, 10, 20, 20, Label::iPSC, 0.9), rect_cell(2, 1, 150, 150, 20, 20, Label::iPSC, 0.8),
            rect_cell(3, 1, 60, 10, 20, 20, Label::iPSC, 0.7)};
  const std::vector<FrameData> frames{f};
  const PrCurve c = pr_metrics(frames, 0.5);
  ASSERT_EQ(c.points.size(), 3u);
  EXPECT_DOUBLE_EQ(c.points[1].precision, 0.5);
  EXPECT_NEAR(c.ap, 0.5 * 1.0 + 0.5 * (2.0 / 3.0), 1e-12);
  EXPECT_NEAR(c.rp_auc, 0.5 + 0.5 * (0.5 + 2.0 / 3.0) / 2.0, 1e-12);
  EXPECT_EQ(c.true_positives, 2);
  EXPECT_EQ(c.gt_positives, 2);
}

TEST(PrecisionRecall, DfcPredictionsAreIgnoredAndGtRequired) {
  FrameData f;
  f.gts = {rect_cell(1, 1, 10, 10, 20, 20, Label::iPSC)};
  f.dets = {rect_cell(1, 1, 10, 10, 20, 20, Label::DfC, 0.9)};
  const std::vector<FrameData> frames{f};
  EXPECT_EQ(pr_metrics(frames, 0.5).ap, 0.0);
  FrameData none;
  none.gts = {rect_cell(1, 1, 10, 10, 20, 20, Label::DfC)};
  const std::vector<FrameData> no_ipsc{none};
  EXPECT_THROW(pr_metrics(no_ipsc, 0.5), Error);
}

// ---- reports -------------------------------------------------------------

TEST(Report, ZeroNoiseGivesPerfectScores) {
  ScenarioConfig cfg;
  cfg.rng_seed = 4;
  const Scenario sc = generate_scenario(cfg);
  const SyntheticDetections d = synthesize_detections(sc, NoiseConfig{});
  const EvaluationReport r = frame_wise_report(frame_data(sc.sequence, d.detections), EvalConfig{});
  ASSERT_TRUE(r.pooled.auc);
  EXPECT_EQ(*r.pooled.auc, 1.0);
  EXPECT_EQ(*r.pooled.ap, 1.0);
  for (const auto& p : r.pooled.pauc) EXPECT_EQ(p->normalized, 1.0);
  for (Outcome o : {Outcome::FP_CLS, Outcome::FP_DUP, Outcome::FP_NEX_WHOLE, Outcome::FP_NEX_PART, Outcome::FN_CLS,
                    Outcome::FN_DET})
    EXPECT_EQ(r.pooled.counts[static_cast<std::size_t>(o)], 0u) << to_string(o);
  EXPECT_EQ(*r.pooled.fn_det_rate, 0.0);
}

TEST(Report, JobsDoNotChangeRows) {
  ScenarioConfig cfg;
  cfg.rng_seed = 6;
  const Scenario sc = generate_scenario(cfg);
  NoiseConfig noise;
  noise.flip_prob = 0.2;
  noise.whole_rate = 1;
  const SyntheticDetections d = synthesize_detections(sc, noise);
  const auto frames = frame_data(sc.sequence, d.detections);
  EvalConfig one, four;
  four.jobs = 4;
  const EvaluationReport a = frame_wise_report(frames, one), b = frame_wise_report(frames, four);
  ASSERT_EQ(a.frames.size(), b.frames.size());
  for (std::size_t i = 0; i < a.frames.size(); ++i) {
    EXPECT_EQ(a.frames[i].counts, b.frames[i].counts);
    EXPECT_EQ(a.frames[i].auc, b.frames[i].auc);
  }
  EXPECT_EQ(a.pooled.auc, b.pooled.auc);
  EXPECT_EQ(a.pooled.ap, b.pooled.ap);
}

// ---- subsequence plans ------------------------------------------------------

TEST(Plan, FixedSizesOnSixteenFrames) {
  std::vector<FrameIndex> frames;
  for (FrameIndex f = 1; f <= 16; ++f) frames.push_back(f);
  const std::map<std::size_t, std::size_t> want{{1, 16}, {2, 8}, {4, 4}, {8, 2}};
  for (const auto& [k, count] : want) {
    const SubsequencePlan p = subsequence_plan(frames, k);
    ASSERT_EQ(p.subsequences.size(), count) << k;
    for (std::size_t i = 0; i < p.subsequences.size(); ++i) {
      EXPECT_EQ(p.subsequences[i].size(), k);
      EXPECT_EQ(p.targets[i], p.subsequences[i]);
      EXPECT_EQ(p.subsequences[i].front(), static_cast<FrameIndex>(i * k + 1));
    }
  }
}

TEST(Plan, IncrementalPrefixes) {
  std::vector<FrameIndex> frames;
  for (FrameIndex f = 146; f <= 161; ++f) frames.push_back(f);
  const SubsequencePlan p = subsequence_plan(frames, std::nullopt);
  ASSERT_EQ(p.subsequences.size(), 16u);
  for (std::size_t i = 0; i < 16; ++i) {
    EXPECT_EQ(p.subsequences[i], std::vector<FrameIndex>(frames.begin(), frames.begin() + i + 1));
    EXPECT_EQ(p.targets[i], std::vector<FrameIndex>{frames[i]});
  }
}

TEST(Plan, UnevenChunkAndErrors) {
  const std::vector<FrameIndex> frames{1, 2, 3, 4, 5};
  const SubsequencePlan p = subsequence_plan(frames, 2);
  ASSERT_EQ(p.subsequences.size(), 3u);
  EXPECT_EQ(p.subsequences.back(), std::vector<FrameIndex>{5});
  EXPECT_THROW(subsequence_plan(frames, 0), Error);
  EXPECT_THROW(subsequence_plan({}, 2), Error);
  const std::vector<FrameIndex> unordered{1, 3, 2};
  EXPECT_THROW(subsequence_plan(unordered, 1), Error);
}

TEST(Plan, SplitOnDiscontinuity) {
  const std::vector<FrameIndex> frames{1, 2, 3, 4, 5, 6};
  const std::vector<FrameIndex> breaks{3, 5};
  const auto runs = split_on_discontinuity(frames, breaks);
  ASSERT_EQ(runs.size(), 3u);
  EXPECT_EQ(runs[0], (std::vector<FrameIndex>{1, 2}));
  EXPECT_EQ(runs[1], (std::vector<FrameIndex>{3, 4}));
  EXPECT_EQ(runs[2], (std::vector<FrameIndex>{5, 6}));
  const std::vector<FrameIndex> outside{9};
  EXPECT_THROW(split_on_discontinuity(frames, outside), Error);
}
