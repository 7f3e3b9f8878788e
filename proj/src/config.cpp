#include "ipsc/config.hpp"

#include <fstream>
#include <functional>
#include <set>

namespace ipsc {

namespace {

// Applies the keys of one JSON object to a struct, rejecting unknown keys.
class Reader {
 public:
  Reader(const Json& j, std::string section) : j_(j), section_(std::move(section)) {
    if (!j_.is_object()) throw Error(section_ + ": config must be a JSON object");
  }

  template <class T>
  Reader& operator()(const char* key, T& value) {
    known_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return *this;
    try {
      if constexpr (std::is_same_v<T, double>) {
        if (!it->is_number()) throw Error("expected a number");
      } else if constexpr (std::is_integral_v<T>) {
        if (!it->is_number_integer()) throw Error("expected an integer");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!it->is_string()) throw Error("expected a string");
      }
      value = it->template get<T>();
    } catch (const std::exception& e) {
      throw Error(section_ + "." + key + ": " + e.what());
    }
    return *this;
  }

  Reader& custom(const char* key, const std::function<void(const Json&)>& apply) {
    known_.insert(key);
    if (auto it = j_.find(key); it != j_.end()) {
      try {
        apply(*it);
      } catch (const std::exception& e) {
        throw Error(section_ + "." + key + ": " + e.what());
      }
    }
    return *this;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!known_.count(it.key())) throw Error(section_ + ": unknown key '" + it.key() + "'");
  }

 private:
  const Json& j_;
  std::string section_;
  std::set<std::string> known_;
};

}  // namespace

Json to_json(const TrackParams& p) {
  return {{"iou_gate", p.iou_gate},
          {"centroid_gate", p.centroid_gate},
          {"size_ratio_low", p.size_ratio_low},
          {"size_ratio_high", p.size_ratio_high},
          {"event_overlap_min", p.event_overlap_min},
          {"shape_change_max", p.shape_change_max}};
}

TrackParams track_params_from_json(const Json& j, TrackParams p) {
  Reader r(j, "track");
  r("iou_gate", p.iou_gate)("centroid_gate", p.centroid_gate)("size_ratio_low", p.size_ratio_low)(
      "size_ratio_high", p.size_ratio_high)("event_overlap_min", p.event_overlap_min)("shape_change_max",
                                                                                       p.shape_change_max);
  r.finish();
  p.validate();
  return p;
}

Json to_json(const EvalConfig& c) {
  return {{"match_iou", c.match.match_iou}, {"part_containment", c.match.part_containment}, {"fp_maxima", c.fp_maxima}};
}

EvalConfig eval_config_from_json(const Json& j, EvalConfig c) {
  Reader r(j, "evaluate");
  r("match_iou", c.match.match_iou)("part_containment", c.match.part_containment);
  r.custom("fp_maxima", [&](const Json& v) {
    if (!v.is_array() || v.empty()) throw Error("expected a non-empty array of numbers");
    c.fp_maxima.clear();
    for (const Json& x : v) {
      if (!x.is_number()) throw Error("expected a non-empty array of numbers");
      const double f = x.get<double>();
      if (!(f > 0.0 && f <= 1.0)) throw Error("fp maxima must lie in (0, 1]");
      c.fp_maxima.push_back(f);
    }
  });
  r.finish();
  if (!(c.match.match_iou > 0.0 && c.match.match_iou <= 1.0)) throw Error("evaluate.match_iou must lie in (0, 1]");
  if (!(c.match.part_containment > 0.0 && c.match.part_containment <= 1.0))
    throw Error("evaluate.part_containment must lie in (0, 1]");
  return c;
}

Json to_json(const ScenarioConfig& c) {
  return {{"roi", c.roi},
          {"frame_count", c.frame_count},
          {"frame_size", {c.frame_size.width, c.frame_size.height}},
          {"initial_cells", c.initial_cells},
          {"max_cells", c.max_cells},
          {"motion_sigma", c.motion_sigma},
          {"growth_rate", c.growth_rate},
          {"division_prob", c.division_prob},
          {"fusion_prob", c.fusion_prob},
          {"appearance_rate", c.appearance_rate},
          {"disappearance_prob", c.disappearance_prob},
          {"radius_min", c.radius_min},
          {"radius_max", c.radius_max},
          {"aspect_min", c.aspect_min},
          {"control_points", c.control_points},
          {"boundary_noise", c.boundary_noise},
          {"division_min_axis", c.division_min_axis},
          {"fusion_range", c.fusion_range},
          {"fusion_overlap", c.fusion_overlap},
          {"approach_speed", c.approach_speed},
          {"spawn_distance", c.spawn_distance},
          {"ipsc_fraction", c.ipsc_fraction},
          {"rng_seed", c.rng_seed}};
}

ScenarioConfig scenario_config_from_json(const Json& j, ScenarioConfig c) {
  Reader r(j, "simulate");
  r("roi", c.roi)("frame_count", c.frame_count)("initial_cells", c.initial_cells)("max_cells", c.max_cells)(
      "motion_sigma", c.motion_sigma)("growth_rate", c.growth_rate)("division_prob", c.division_prob)(
      "fusion_prob", c.fusion_prob)("appearance_rate", c.appearance_rate)("disappearance_prob", c.disappearance_prob)(
      "radius_min", c.radius_min)("radius_max", c.radius_max)("aspect_min", c.aspect_min)(
      "control_points", c.control_points)("boundary_noise", c.boundary_noise)("division_min_axis",
                                                                              c.division_min_axis)(
      "fusion_range", c.fusion_range)("fusion_overlap", c.fusion_overlap)("approach_speed", c.approach_speed)(
      "spawn_distance", c.spawn_distance)("ipsc_fraction", c.ipsc_fraction)("rng_seed", c.rng_seed);
  r.custom("frame_size", [&](const Json& v) {
    if (!v.is_array() || v.size() != 2 || !v[0].is_number_integer() || !v[1].is_number_integer())
      throw Error("expected [width, height]");
    c.frame_size = {v[0].get<int>(), v[1].get<int>()};
  });
  r.finish();
  c.validate();
  return c;
}

Json to_json(const NoiseConfig& c) {
  return {{"drop_prob", c.drop_prob},
          {"jitter_px", c.jitter_px},
          {"dup_prob", c.dup_prob},
          {"flip_prob", c.flip_prob},
          {"whole_rate", c.whole_rate},
          {"part_rate", c.part_rate},
          {"min_confidence", c.min_confidence},
          {"max_confidence", c.max_confidence},
          {"match_iou", c.match.match_iou},
          {"part_containment", c.match.part_containment},
          {"rng_seed", c.rng_seed}};
}

NoiseConfig noise_config_from_json(const Json& j, NoiseConfig c) {
  Reader r(j, "noise");
  r("drop_prob", c.drop_prob)("jitter_px", c.jitter_px)("dup_prob", c.dup_prob)("flip_prob", c.flip_prob)(
      "whole_rate", c.whole_rate)("part_rate", c.part_rate)("min_confidence", c.min_confidence)(
      "max_confidence", c.max_confidence)("match_iou", c.match.match_iou)("part_containment",
                                                                          c.match.part_containment)(
      "rng_seed", c.rng_seed);
  r.finish();
  c.validate();
  return c;
}

Json load_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "' for reading");
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(path.string() + ": invalid JSON: " + e.what());
  }
}

}  // namespace ipsc
