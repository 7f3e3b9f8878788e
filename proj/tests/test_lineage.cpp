#include <gtest/gtest.h>

#include "ipsc/lineage.hpp"
#include "support.hpp"

using namespace ipsc;
using namespace ipsc::testing;

namespace {

// 1 -> 2 -> 3 (final frame 3), plus 4 -> 5 dividing into 6, 7.
LineageForest small_forest() {
  LineageForest f;
  f.roi = "t";
  f.frame_size = test_frame();
  f.frames = {1, 2, 3};
  f.final_frame = 3;
  auto node = [&](std::uint64_t id, FrameIndex frame) {
    CellInstance c;
    c.id = CellId{id};
    c.frame = frame;
    c.roi = "t";
    f.nodes[c.id] = c;
  };
  node(1, 1);
  node(2, 2);
  node(3, 3);
  node(4, 1);
  node(5, 2);
  node(6, 3);
  node(7, 3);
  f.add_edge({CellId{1}, CellId{2}, EdgeKind::Continuation});
  f.add_edge({CellId{2}, CellId{3}, EdgeKind::Continuation});
  f.add_edge({CellId{4}, CellId{5}, EdgeKind::Continuation});
  f.add_edge({CellId{5}, CellId{6}, EdgeKind::Division});
  f.add_edge({CellId{5}, CellId{7}, EdgeKind::Division});
  assign_tracks(f);
  return f;
}

bool has_violation(const LineageForest& f, ViolationKind k) {
  for (const auto& v : validate_forest(f))
    if (v.kind == k) return true;
  return false;
}

}  // namespace

TEST(Propagation, MatchesReachabilityOracleOnRandomForests) {
  Rng rng(2024);
  int conflicted = 0, clean = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const LineageForest f = random_forest(rng, 1000);
    ASSERT_LE(f.nodes.size(), 1000u);
    ASSERT_TRUE(validate_forest(f).empty()) << "trial " << trial;
    const SeedLabels seeds = random_seeds(rng, f, trial % 2 == 0);
    const ReachOracle o = reach_oracle(f, seeds);
    const Propagation p = propagate_labels(f, seeds);

    std::set<CellId> want_conflicts;
    for (const auto& [id, labels] : o.labels)
      if (labels.size() > 1) want_conflicts.insert(id);
    std::set<CellId> got_conflicts;
    for (const Conflict& c : p.conflicts) {
      got_conflicts.insert(c.node);
      EXPECT_EQ(std::set<CellId>(c.seeds.begin(), c.seeds.end()), o.seeds.at(c.node));
    }
    ASSERT_EQ(got_conflicts, want_conflicts) << "trial " << trial;
    ASSERT_EQ(p.ok(), want_conflicts.empty());
    if (!p.ok()) {
      ++conflicted;
      EXPECT_FALSE(p.labeled);
      continue;
    }
    ++clean;
    for (const auto& [id, node] : p.labeled->nodes) {
      const auto& labels = o.labels.at(id);
      const Label want = labels.empty() ? Label::Unlabeled : *labels.begin();
      ASSERT_EQ(node.label, want) << "trial " << trial << " node " << id.value;
    }
  }
  EXPECT_GT(conflicted, 20);
  EXPECT_GT(clean, 20);
}

TEST(Propagation, FlowsThroughDivisionAndLeavesOrphansUnlabeled) {
  LineageForest f = small_forest();
  CellInstance orphan;
  orphan.id = CellId{8};
  orphan.frame = 2;
  orphan.roi = "t";
  f.nodes[orphan.id] = orphan;  // disappears before the final frame
  const Propagation p = propagate_labels(f, {{CellId{3}, Label::iPSC}, {CellId{6}, Label::DfC}, {CellId{7}, Label::DfC}});
  ASSERT_TRUE(p.ok());
  EXPECT_EQ(p.labeled->node(CellId{1}).label, Label::iPSC);
  EXPECT_EQ(p.labeled->node(CellId{4}).label, Label::DfC);
  EXPECT_EQ(p.labeled->node(CellId{8}).label, Label::Unlabeled);
  EXPECT_EQ(find_uncategorizable(f), std::set<CellId>{CellId{8}});
}

TEST(Propagation, ConflictListsContributingSeeds) {
  const LineageForest f = small_forest();
  const Propagation p = propagate_labels(f, {{CellId{6}, Label::iPSC}, {CellId{7}, Label::DfC}});
  ASSERT_FALSE(p.ok());
  ASSERT_EQ(p.conflicts.size(), 2u);  // nodes 4 and 5
  EXPECT_EQ(p.conflicts[0].node, CellId{4});
  EXPECT_EQ(p.conflicts[1].seeds, (std::vector<CellId>{CellId{6}, CellId{7}}));
}

TEST(Propagation, RejectsBadSeeds) {
  const LineageForest f = small_forest();
  EXPECT_THROW(propagate_labels(f, {}), Error);
  EXPECT_THROW(propagate_labels(f, {{CellId{2}, Label::iPSC}}), Error);
  EXPECT_THROW(propagate_labels(f, {{CellId{99}, Label::iPSC}}), NotFoundError);
  EXPECT_THROW(propagate_labels(f, {{CellId{3}, Label::Unlabeled}}), Error);
}

TEST(Validate, AcceptsWellFormedForest) { EXPECT_TRUE(validate_forest(small_forest()).empty()); }

TEST(Validate, DetectsEachViolationKind) {
  {
    LineageForest f = small_forest();
    f.add_edge({CellId{3}, CellId{1}, EdgeKind::Continuation});
    EXPECT_TRUE(has_violation(f, ViolationKind::Cycle));
    EXPECT_TRUE(has_violation(f, ViolationKind::EdgeOrientation));
  }
  {
    LineageForest f = small_forest();
    f.add_edge({CellId{1}, CellId{99}, EdgeKind::Continuation});
    EXPECT_TRUE(has_violation(f, ViolationKind::DanglingEdge));
  }
  {
    LineageForest f = small_forest();
    f.edges.erase({CellId{5}, CellId{7}});
    EXPECT_TRUE(has_violation(f, ViolationKind::DivisionArity));
  }
  {
    LineageForest f = small_forest();
    f.add_edge({CellId{4}, CellId{2}, EdgeKind::Continuation});
    EXPECT_TRUE(has_violation(f, ViolationKind::ContinuationArity));
  }
  {
    LineageForest f = small_forest();
    f.add_edge({CellId{2}, CellId{6}, EdgeKind::Fusion});
    EXPECT_TRUE(has_violation(f, ViolationKind::MixedEdgeKinds));
  }
  {
    LineageForest f = small_forest();
    f.edges[{CellId{2}, CellId{3}}] = EdgeKind::Fusion;
    EXPECT_TRUE(has_violation(f, ViolationKind::FusionArity));
  }
  {
    LineageForest f = small_forest();
    f.final_frame = 2;
    EXPECT_TRUE(has_violation(f, ViolationKind::NodeBeyondFinalFrame));
  }
}

TEST(Tracks, OnePerContinuationChain) {
  const LineageForest f = small_forest();
  EXPECT_EQ(f.node(CellId{1}).track, f.node(CellId{3}).track);
  EXPECT_EQ(f.node(CellId{4}).track, f.node(CellId{5}).track);
  EXPECT_NE(f.node(CellId{6}).track, f.node(CellId{5}).track);
  EXPECT_NE(f.node(CellId{6}).track, f.node(CellId{7}).track);
  EXPECT_EQ(f.node(CellId{1}).track->value, 1u);
}

TEST(Edits, SetEventKindReplacesEdgesAndBumpsRevision) {
  const LineageForest f = small_forest();
  const LineageForest g = apply_edit(f, edit::SetEventKind{{CellId{5}}, {CellId{6}}, EdgeKind::Continuation});
  EXPECT_EQ(g.revision, f.revision + 1);
  EXPECT_EQ(g.edges.count({CellId{5}, CellId{7}}), 0u);
  EXPECT_EQ(g.edges.at({CellId{5}, CellId{6}}), EdgeKind::Continuation);
  EXPECT_EQ(g.node(CellId{6}).track, g.node(CellId{4}).track);
}

TEST(Edits, InvalidResultIsRejectedWithViolations) {
  const LineageForest f = small_forest();
  try {
    apply_edit(f, edit::RemoveEdge{CellId{5}, CellId{7}});
    FAIL() << "expected EditRejected";
  } catch (const EditRejected& e) {
    ASSERT_FALSE(e.violations().empty());
    EXPECT_EQ(e.violations().front().kind, ViolationKind::DivisionArity);
  }
  EXPECT_THROW(apply_edit(f, edit::AddEdge{{CellId{3}, CellId{1}, EdgeKind::Continuation}}), EditRejected);
  EXPECT_THROW(apply_edit(f, edit::SetEventKind{{CellId{5}}, {CellId{6}, CellId{7}}, EdgeKind::Fusion}), EditRejected);
  EXPECT_THROW(apply_edit(f, edit::SplitTrack{CellId{99}}), NotFoundError);
}

TEST(Edits, SplitAndMergeRoundTrip) {
  const LineageForest f = small_forest();
  const LineageForest split = apply_edit(f, edit::SplitTrack{CellId{3}});
  EXPECT_NE(split.node(CellId{3}).track, split.node(CellId{2}).track);
  const LineageForest merged = apply_edit(split, edit::MergeTracks{CellId{2}, CellId{3}});
  EXPECT_TRUE(same_lineage(merged, f));
  EXPECT_THROW(apply_edit(f, edit::MergeTracks{CellId{1}, CellId{3}}), EditRejected);
}

TEST(Edits, SeedLabelOnlyOnFinalFrame) {
  const LineageForest f = small_forest();
  const LineageForest g = apply_edit(f, edit::SetSeedLabel{CellId{3}, Label::iPSC});
  EXPECT_EQ(seeds_from_final_frame(g), (SeedLabels{{CellId{3}, Label::iPSC}}));
  EXPECT_THROW(apply_edit(f, edit::SetSeedLabel{CellId{1}, Label::iPSC}), EditRejected);
}

TEST(EdgeKind, NamesRoundTrip) {
  for (EdgeKind k : {EdgeKind::Continuation, EdgeKind::Division, EdgeKind::Fusion})
    EXPECT_EQ(parse_edge_kind(to_string(k)), k);
  EXPECT_THROW(parse_edge_kind("merge"), Error);
}
