#pragma once

// Synthetic colony generator with exact lineage ground truth, plus a
// detection-noise model whose injected failures are tallied per class.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "ipsc/lineage.hpp"
#include "ipsc/metrics.hpp"
#include "ipsc/sequence.hpp"
#include "ipsc/tracking.hpp"

namespace ipsc {

struct ScenarioConfig {
  std::string roi = "sim";
  int frame_count = 30;
  FrameSize frame_size{512, 512};
  int initial_cells = 20;
  int max_cells = 50;          // per frame
  double motion_sigma = 1.5;   // px per frame and axis
  double growth_rate = 1.02;   // area ratio per frame
  double division_prob = 0.02;     // per eligible cell and frame
  double fusion_prob = 0.05;       // per eligible neighbour pair and frame
  double appearance_rate = 0.1;    // Poisson mean of new cells per frame
  double disappearance_prob = 0.005;
  double radius_min = 11.0;  // initial semi-major axis range, px
  double radius_max = 16.0;
  double aspect_min = 0.7;   // semi-minor / semi-major
  int control_points = 12;   // boundary perturbation knots, 8..16
  double boundary_noise = 0.06;  // relative radial amplitude
  double division_min_axis = 11.0;  // smallest semi-major axis that may divide
  double fusion_range = 16.0;       // surface gap below which two cells are neighbours, px
  double fusion_overlap = 0.2;      // fuse once the pair overlaps this share of the smaller cell
  double approach_speed = 1.5;      // px per frame and cell while a pair closes in
  double spawn_distance = 60.0;     // min centroid distance of a new cell to any other
  double ipsc_fraction = 0.3;       // chance that a lineage family is iPSC
  std::uint64_t rng_seed = 1;

  /// Throws Error for probabilities outside [0, 1], frame_count < 2 and
  /// similar nonsense.
  void validate() const;
  friend bool operator==(const ScenarioConfig&, const ScenarioConfig&) = default;
};

/// Bernoulli draws made while generating, for distribution checks.
struct TrialCounts {
  std::int64_t division_trials = 0;
  std::int64_t divisions = 0;
  std::int64_t fusion_trials = 0;
  std::int64_t fusions_started = 0;
  std::int64_t fusions = 0;
  std::int64_t disappearance_trials = 0;
  std::int64_t disappearances = 0;
  std::int64_t appearances = 0;
};

struct Scenario {
  ScenarioConfig config;
  SequenceManifest sequence;        // labels are the propagated ground truth
  LineageForest forest;             // ground-truth lineage, labeled
  std::vector<TrackEvent> events;   // forward-oriented, sorted like the tracker's
  SeedLabels seeds;                 // every final-frame cell
  TrialCounts trials;
};

/// Deterministic for a fixed config. Throws Error when the initial cells
/// cannot be packed into the frame.
Scenario generate_scenario(const ScenarioConfig& cfg);

struct NoiseConfig {
  double drop_prob = 0.0;
  int jitter_px = 0;         // max translation of a detection, per axis
  double dup_prob = 0.0;     // extra detection of a correctly detected iPSC
  double flip_prob = 0.0;    // predicted class flipped
  double whole_rate = 0.0;   // Poisson mean of spurious cells per frame
  double part_rate = 0.0;    // Poisson mean of fragments of labeled cells per frame
  double min_confidence = 0.55;
  double max_confidence = 1.0;
  MatchParams match;         // geometry every injected failure must satisfy
  std::uint64_t rng_seed = 1;

  void validate() const;
};

struct InjectedFrame {
  FrameIndex frame = 0;
  std::array<std::size_t, kOutcomeCount> counts{};
};

struct SyntheticDetections {
  SequenceManifest detections;          // provenance Detector
  std::vector<InjectedFrame> injected;  // one per frame
  std::array<std::size_t, kOutcomeCount> totals{};
};

/// Detections derived from the labeled ground-truth cells. Every injected
/// error is placed so that matching classifies it exactly as tallied.
SyntheticDetections synthesize_detections(const Scenario& s, const NoiseConfig& noise);
SyntheticDetections synthesize_detections(const SequenceManifest& gt, const NoiseConfig& noise);

}  // namespace ipsc
