#pragma once

// JSON forms of the tunable parameter records. Readers start from a base
// value and override only the keys present; unknown keys are errors so that
// typos in config files do not pass silently.

#include "ipsc/datastore.hpp"
#include "ipsc/metrics.hpp"
#include "ipsc/simulator.hpp"
#include "ipsc/tracking.hpp"

namespace ipsc {

Json to_json(const TrackParams& p);
TrackParams track_params_from_json(const Json& j, TrackParams base = {});

/// Covers match thresholds and fp maxima; the worker count is not echoed.
Json to_json(const EvalConfig& c);
EvalConfig eval_config_from_json(const Json& j, EvalConfig base = {});

Json to_json(const ScenarioConfig& c);
ScenarioConfig scenario_config_from_json(const Json& j, ScenarioConfig base = {});

Json to_json(const NoiseConfig& c);
NoiseConfig noise_config_from_json(const Json& j, NoiseConfig base = {});

/// Reads a JSON object from a file. Throws Error on IO or parse failures.
Json load_json_file(const std::filesystem::path& path);

}  // namespace ipsc
