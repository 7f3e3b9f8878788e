#pragma once

// Generators and brute-force oracles shared by the unit tests and the
// acceptance runner. Oracles deliberately avoid the library's own helpers.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <vector>

#include "ipsc/lineage.hpp"
#include "ipsc/metrics.hpp"
#include "ipsc/simulator.hpp"
#include "ipsc/tracking.hpp"

namespace ipsc::testing {

using Rng = std::mt19937_64;

inline FrameSize test_frame() { return {256, 256}; }

inline Mask rect_mask(double x, double y, double w, double h, FrameSize frame = test_frame()) {
  return Mask({{x, y}, {x + w, y}, {x + w, y + h}, {x, y + h}}, frame);
}

inline CellInstance rect_cell(std::uint64_t id, FrameIndex frame, double x, double y, double w, double h,
                              Label label = Label::Unlabeled, std::optional<double> conf = std::nullopt) {
  CellInstance c;
  c.id = CellId{id};
  c.frame = frame;
  c.roi = "t";
  c.mask = rect_mask(x, y, w, h);
  c.label = label;
  c.confidence = conf;
  return c;
}

// ---- ROC ------------------------------------------------------------------

/// Mann-Whitney form of the AUC: P(score_pos > score_neg) + ½ P(tie).
inline double concordance_auc(const std::vector<RocSample>& s) {
  double wins = 0.0;
  std::int64_t p = 0, n = 0;
  for (const auto& a : s) {
    if (!a.positive) continue;
    ++p;
    for (const auto& b : s) {
      if (b.positive) continue;
      wins += a.score > b.score ? 1.0 : a.score == b.score ? 0.5 : 0.0;
    }
  }
  for (const auto& b : s) n += !b.positive;
  return wins / (static_cast<double>(p) * static_cast<double>(n));
}

/// Random score set with both classes present; ties are frequent when the
/// scores are drawn from a coarse grid.
inline std::vector<RocSample> random_scores(Rng& rng, std::size_t max_size) {
  std::uniform_int_distribution<std::size_t> size(2, max_size);
  const std::size_t n = size(rng);
  const int grid = std::uniform_int_distribution<int>(0, 3)(rng);
  const double shift = std::uniform_real_distribution<double>(-1.0, 2.0)(rng);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::bernoulli_distribution pos(std::uniform_real_distribution<double>(0.05, 0.95)(rng));
  std::vector<RocSample> out(n);
  for (auto& s : out) {
    s.positive = pos(rng);
    double v = noise(rng) + (s.positive ? shift : 0.0);
    if (grid == 1) v = std::round(v * 4.0) / 4.0;
    if (grid == 2) v = std::round(v);
    s.score = v;
  }
  out[0].positive = true;
  out[1].positive = false;
  return out;
}

// ---- lineage forests --------------------------------------------------------

/// Valid forest grown frame by frame with continuations, divisions,
/// fusions, appearances and disappearances. At most `max_nodes` nodes.
inline LineageForest random_forest(Rng& rng, std::size_t max_nodes) {
  LineageForest f;
  f.roi = "rand";
  f.frame_size = test_frame();
  const int frames = std::uniform_int_distribution<int>(2, 30)(rng);
  std::uint64_t next_id = 1;
  auto add_node = [&](FrameIndex frame) {
    CellInstance c;
    c.id = CellId{next_id++};
    c.frame = frame;
    c.roi = f.roi;
    f.nodes[c.id] = c;
    return c.id;
  };
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<CellId> live;
  const int start = std::uniform_int_distribution<int>(1, 8)(rng);
  for (int i = 0; i < start; ++i) live.push_back(add_node(1));
  f.frames.push_back(1);
  for (FrameIndex t = 2; t <= frames; ++t) {
    if (f.nodes.size() + 3 * live.size() + 3 > max_nodes) break;
    std::shuffle(live.begin(), live.end(), rng);
    std::vector<CellId> next;
    std::vector<bool> used(live.size(), false);
    for (std::size_t i = 0; i < live.size(); ++i) {
      if (used[i]) continue;
      used[i] = true;
      const double r = u(rng);
      if (r < 0.07) continue;  // disappears
      if (r < 0.17) {
        const int kids = u(rng) < 0.85 ? 2 : 3;
        for (int k = 0; k < kids; ++k) {
          const CellId c = add_node(t);
          f.add_edge({live[i], c, EdgeKind::Division});
          next.push_back(c);
        }
        continue;
      }
      if (r < 0.25) {
        std::size_t j = i + 1;
        while (j < live.size() && used[j]) ++j;
        if (j < live.size()) {
          used[j] = true;
          const CellId c = add_node(t);
          f.add_edge({live[i], c, EdgeKind::Fusion});
          f.add_edge({live[j], c, EdgeKind::Fusion});
          next.push_back(c);
          continue;
        }
      }
      const CellId c = add_node(t);
      f.add_edge({live[i], c, EdgeKind::Continuation});
      next.push_back(c);
    }
    const int born = std::uniform_int_distribution<int>(0, 2)(rng);
    for (int k = 0; k < born; ++k) next.push_back(add_node(t));
    if (next.empty()) next.push_back(add_node(t));
    live = std::move(next);
    f.frames.push_back(t);
  }
  f.final_frame = f.frames.back();
  assign_tracks(f);
  return f;
}

/// Seeds on a random subset of final-frame nodes. With `coherent` every
/// weakly connected family gets one class, otherwise labels are random.
inline SeedLabels random_seeds(Rng& rng, const LineageForest& f, bool coherent) {
  std::map<CellId, CellId> parent;
  for (const auto& [id, n] : f.nodes) parent[id] = id;
  auto root = [&](CellId x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& [key, kind] : f.edges) parent[root(key.first)] = root(key.second);
  std::map<CellId, Label> family;
  std::bernoulli_distribution coin(0.5), take(0.8);
  SeedLabels seeds;
  CellId first{};
  for (const auto& [id, n] : f.nodes) {
    if (n.frame != f.final_frame) continue;
    if (!first.value) first = id;
    if (!take(rng)) continue;
    if (coherent) {
      auto [it, fresh] = family.emplace(root(id), Label::iPSC);
      if (fresh) it->second = coin(rng) ? Label::iPSC : Label::DfC;
      seeds[id] = it->second;
    } else {
      seeds[id] = coin(rng) ? Label::iPSC : Label::DfC;
    }
  }
  if (seeds.empty()) seeds[first] = Label::DfC;
  return seeds;
}

struct ReachOracle {
  std::map<CellId, std::set<Label>> labels;  // seed classes reachable from each node
  std::map<CellId, std::set<CellId>> seeds;  // seeds reachable from each node
};

/// Exhaustive reverse reachability: a DFS from every node over the raw
/// edge table.
inline ReachOracle reach_oracle(const LineageForest& f, const SeedLabels& seeds) {
  std::map<CellId, std::vector<CellId>> children;
  for (const auto& [key, kind] : f.edges) children[key.first].push_back(key.second);
  ReachOracle o;
  for (const auto& [id, n] : f.nodes) {
    std::set<CellId> seen{id};
    std::vector<CellId> stack{id};
    auto& labels = o.labels[id];
    auto& found = o.seeds[id];
    while (!stack.empty()) {
      const CellId cur = stack.back();
      stack.pop_back();
      if (auto s = seeds.find(cur); s != seeds.end()) {
        labels.insert(s->second);
        found.insert(cur);
      }
      for (CellId c : children[cur])
        if (seen.insert(c).second) stack.push_back(c);
    }
  }
  return o;
}

// ---- simulator scenarios ------------------------------------------------------

struct OracleScenarioParams {
  int min_divisions = 5;
  int min_fusions = 3;
  std::size_t count = 25;
  std::uint64_t first_seed = 1;
  std::uint64_t max_attempts = 1000;
};

inline int count_events(const Scenario& s, EventKind k) {
  return static_cast<int>(std::count_if(s.events.begin(), s.events.end(), [k](const TrackEvent& e) { return e.kind == k; }));
}

/// Default scenarios (30 frames, at most 50 cells per frame) whose ground
/// truth holds enough divisions and fusions, by ascending rng seed.
inline std::vector<Scenario> oracle_scenarios(const OracleScenarioParams& want = {}) {
  std::vector<Scenario> out;
  for (std::uint64_t seed = want.first_seed; seed < want.first_seed + want.max_attempts && out.size() < want.count;
       ++seed) {
    ScenarioConfig cfg;
    cfg.rng_seed = seed;
    Scenario s = generate_scenario(cfg);
    if (count_events(s, EventKind::Division) >= want.min_divisions &&
        count_events(s, EventKind::Fusion) >= want.min_fusions)
      out.push_back(std::move(s));
  }
  return out;
}

inline SequenceManifest strip_labels(SequenceManifest m) {
  for (auto& c : m.cells) {
    c.label = Label::Unlabeled;
    c.track.reset();
  }
  return m;
}

inline SequenceManifest make_sequence(std::vector<CellInstance> cells, std::vector<FrameIndex> frames) {
  SequenceManifest m;
  m.roi = "t";
  m.frame_size = test_frame();
  m.frames = std::move(frames);
  m.cells = std::move(cells);
  m.canonicalize();
  return m;
}

// Frame 1: A (1) and B (2). Frame 2: A moved (3), B split into 4 and 5,
// and a newcomer 6. Frame 3: 3 continues as 7, 4 and 5 fuse into 8.
inline SequenceManifest event_sequence() {
  return make_sequence({rect_cell(1, 1, 20, 20, 20, 20), rect_cell(2, 1, 100, 100, 24, 24),
                        rect_cell(3, 2, 22, 21, 20, 20), rect_cell(4, 2, 100, 100, 12, 24),
                        rect_cell(5, 2, 112, 100, 12, 24), rect_cell(6, 2, 200, 30, 16, 16),
                        rect_cell(7, 3, 23, 21, 20, 20), rect_cell(8, 3, 101, 100, 24, 24)},
                       {1, 2, 3});
}

}  // namespace ipsc::testing
