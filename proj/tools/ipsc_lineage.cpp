// ipsc-lineage: batch entry points for tracking, label propagation,
// evaluation, subsequence plans, simulation, exports, statistics and the
// review service.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 propagation
// conflict, 3 input validation failure.

#include <charconv>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ipsc/config.hpp"
#include "ipsc/datastore.hpp"
#include "ipsc/http_service.hpp"
#include "ipsc/lineage.hpp"
#include "ipsc/metrics.hpp"
#include "ipsc/report.hpp"
#include "ipsc/service.hpp"
#include "ipsc/simulator.hpp"
#include "ipsc/tracking.hpp"

namespace fs = std::filesystem;
using namespace ipsc;

namespace {

enum Exit : int { kOk = 0, kUsage = 1, kConflict = 2, kInvalid = 3 };

struct UsageError : Error {
  using Error::Error;
};

struct Global {
  std::string config_path;
  unsigned jobs = 1;
  Json config = Json::object();

  const Json& section(const char* name) const {
    static const Json empty = Json::object();
    auto it = config.find(name);
    return it == config.end() ? empty : *it;
  }
};

void load_config(Global& g) {
  if (g.config_path.empty()) return;
  try {
    g.config = load_json_file(g.config_path);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  if (!g.config.is_object()) throw UsageError("config file must hold a JSON object");
  for (auto it = g.config.begin(); it != g.config.end(); ++it) {
    const std::string& k = it.key();
    if (k != "track" && k != "evaluate" && k != "simulate" && k != "noise")
      throw UsageError("config: unknown section '" + k + "'");
  }
}

// Config readers report bad values as plain Errors; from the command line
// those are usage problems.
template <class Fn>
auto usage_on_error(Fn&& fn) {
  try {
    return fn();
  } catch (const NotFoundError&) {
    throw;
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
}

void set_if(Json& j, const char* key, const std::optional<double>& v) {
  if (v) j[key] = *v;
}
void set_if(Json& j, const char* key, const std::optional<std::int64_t>& v) {
  if (v) j[key] = *v;
}
void set_if(Json& j, const char* key, const std::optional<std::string>& v) {
  if (v) j[key] = *v;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  return out;
}

void write_json(const Json& j, const std::string& path) {
  if (path.empty() || path == "-") {
    std::cout << j.dump(2) << '\n';
    return;
  }
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

// "1-16", "146-275", "1,2,5-8".
std::vector<FrameIndex> parse_frames(const std::string& text) {
  std::vector<FrameIndex> out;
  auto number = [&](std::string_view s) {
    FrameIndex v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) throw UsageError("bad frame list '" + text + "'");
    return v;
  };
  std::string_view rest = text;
  while (!rest.empty()) {
    const auto comma = rest.find(',');
    std::string_view part = rest.substr(0, comma);
    rest = comma == std::string_view::npos ? std::string_view() : rest.substr(comma + 1);
    const auto dash = part.find('-', 1);
    if (dash == std::string_view::npos) {
      out.push_back(number(part));
    } else {
      const FrameIndex a = number(part.substr(0, dash)), b = number(part.substr(dash + 1));
      if (b < a) throw UsageError("bad frame range '" + std::string(part) + "'");
      for (FrameIndex f = a; f <= b; ++f) out.push_back(f);
    }
  }
  if (out.empty()) throw UsageError("empty frame list");
  return out;
}

// ---- track ---------------------------------------------------------------

struct TrackArgs {
  std::string input, output, direction = "backward", events;
  std::optional<double> iou_gate, centroid_gate, size_low, size_high, overlap_min, shape_max;
};

int cmd_track(const Global& g, const TrackArgs& a) {
  Json over = Json::object();
  set_if(over, "iou_gate", a.iou_gate);
  set_if(over, "centroid_gate", a.centroid_gate);
  set_if(over, "size_ratio_low", a.size_low);
  set_if(over, "size_ratio_high", a.size_high);
  set_if(over, "event_overlap_min", a.overlap_min);
  set_if(over, "shape_change_max", a.shape_max);
  TrackOptions opt;
  opt.params = usage_on_error([&] { return track_params_from_json(over, track_params_from_json(g.section("track"))); });
  opt.direction = a.direction == "forward" ? Direction::Forward : Direction::Backward;
  opt.mode = TrackMode::Batch;
  opt.jobs = g.jobs;

  const SequenceManifest seq = load_annotations(fs::path(a.input));
  const TrackerState state = start_tracking(seq, opt);
  const auto violations = validate_forest(state.forest);
  if (!violations.empty()) {
    for (const Violation& v : violations) std::cerr << "invalid forest: " << to_string(v.kind) << ": " << v.message << '\n';
    return kInvalid;
  }
  const Json echo = {{"track", to_json(opt.params)}, {"direction", a.direction}};
  save_forest(state.forest, fs::path(a.output), echo);
  if (!a.events.empty()) {
    Json ev = Json::array();
    for (const TrackEvent& e : state.events) ev.push_back(event_to_json(e));
    write_json({{"config", echo}, {"events", ev}}, a.events);
  }
  std::cerr << "tracked " << state.forest.nodes.size() << " instances, " << state.forest.edges.size() << " edges\n";
  return kOk;
}

// ---- propagate -----------------------------------------------------------

struct PropagateArgs {
  std::string forest, seeds, output, report;
};

int cmd_propagate(const Global&, const PropagateArgs& a) {
  const LineageForest forest = load_forest(fs::path(a.forest));
  const SeedLabels seeds = a.seeds.empty() ? seeds_from_final_frame(forest) : load_seeds(a.seeds);
  const Propagation p = propagate_labels(forest, seeds);
  const Json report = propagation_to_json(p, forest);
  if (!p.ok()) {
    write_json(report, a.report);
    std::cerr << p.conflicts.size() << " conflicting node(s); no labels written\n";
    return kConflict;
  }
  save_forest(*p.labeled, fs::path(a.output));
  if (!a.report.empty()) write_json(report, a.report);
  std::cerr << "labeled " << p.labeled->nodes.size() << " instances, " << report["uncategorizable"].size()
            << " uncategorizable\n";
  return kOk;
}

// ---- evaluate ------------------------------------------------------------

struct EvaluateArgs {
  std::string gt, det, output;
  std::optional<double> match_iou, part_containment;
  std::vector<double> fp_max;
};

int cmd_evaluate(const Global& g, const EvaluateArgs& a) {
  Json over = Json::object();
  set_if(over, "match_iou", a.match_iou);
  set_if(over, "part_containment", a.part_containment);
  if (!a.fp_max.empty()) over["fp_maxima"] = a.fp_max;
  EvalConfig cfg = usage_on_error([&] { return eval_config_from_json(over, eval_config_from_json(g.section("evaluate"))); });
  cfg.jobs = g.jobs;

  const SequenceManifest gt = load_annotations(fs::path(a.gt));
  const SequenceManifest det = load_annotations(fs::path(a.det));
  const auto frames = frame_data(gt, det);
  const EvaluationReport r = frame_wise_report(frames, cfg);

  fs::create_directories(a.output);
  Json j;
  j["schema"] = kSchemaVersion;
  j["roi"] = gt.roi;
  j["config"] = {{"evaluate", to_json(cfg)}};
  const Json body = report_to_json(r, cfg);
  for (auto it = body.begin(); it != body.end(); ++it) j[it.key()] = it.value();
  write_json(j, (fs::path(a.output) / "report.json").string());
  auto csv = open_out(fs::path(a.output) / "report.csv");
  write_report_csv(r, cfg, csv);
  return kOk;
}

// ---- plan ----------------------------------------------------------------

struct PlanArgs {
  std::string frames, sequence, output;
  std::optional<std::size_t> fixed;
  std::string breakpoints;
};

int cmd_plan(const Global&, const PlanArgs& a) {
  if (a.frames.empty() == a.sequence.empty()) throw UsageError("plan: give exactly one of --frames or --sequence");
  const std::vector<FrameIndex> frames =
      a.sequence.empty() ? parse_frames(a.frames) : load_annotations(fs::path(a.sequence)).frames;
  std::vector<std::vector<FrameIndex>> runs{frames};
  if (!a.breakpoints.empty()) runs = split_on_discontinuity(frames, parse_frames(a.breakpoints));
  Json out;
  out["mode"] = a.fixed ? "fixed" : "incremental";
  if (a.fixed) out["k"] = *a.fixed;
  Json plans = Json::array();
  std::size_t total = 0;
  for (const auto& run : runs) {
    const SubsequencePlan p = subsequence_plan(run, a.fixed);
    total += p.subsequences.size();
    plans.push_back(plan_to_json(p));
  }
  out["count"] = total;
  out["runs"] = plans;
  write_json(out, a.output);
  return kOk;
}

// ---- simulate ------------------------------------------------------------

struct SimulateArgs {
  std::string output;
  std::optional<std::int64_t> seed, frames, initial_cells;
  std::optional<std::string> roi;
  bool detections = false;
  bool images = false;
};

int cmd_simulate(const Global& g, const SimulateArgs& a) {
  Json over = Json::object();
  set_if(over, "rng_seed", a.seed);
  set_if(over, "frame_count", a.frames);
  set_if(over, "initial_cells", a.initial_cells);
  set_if(over, "roi", a.roi);
  const ScenarioConfig cfg =
      usage_on_error([&] { return scenario_config_from_json(over, scenario_config_from_json(g.section("simulate"))); });
  Scenario s = generate_scenario(cfg);

  const fs::path dir(a.output);
  fs::create_directories(dir);
  const std::string stem = cfg.roi;
  if (a.images) {
    for (FrameIndex f : s.sequence.frames) {
      const std::string name = "images/" + stem + "_" + std::to_string(f) + ".pgm";
      write_pgm(render_frame(s.sequence, f), dir / name);
      s.sequence.frame_images[f] = name;
    }
  }
  Json echo = {{"simulate", to_json(cfg)}};
  save_annotations(s.sequence, dir / (stem + ".jsonl"), echo);
  save_forest(s.forest, dir / (stem + ".forest.jsonl"), echo);
  write_json(seeds_to_json(s.seeds), (dir / (stem + ".seeds.json")).string());

  Json ev = Json::array();
  for (const TrackEvent& e : s.events) ev.push_back(event_to_json(e));
  const TrialCounts& t = s.trials;
  Json trials = {{"division_trials", t.division_trials}, {"divisions", t.divisions},
                 {"fusion_trials", t.fusion_trials},     {"fusions_started", t.fusions_started},
                 {"fusions", t.fusions},                 {"disappearance_trials", t.disappearance_trials},
                 {"disappearances", t.disappearances},   {"appearances", t.appearances}};
  write_json({{"config", echo}, {"trials", trials}, {"events", ev}}, (dir / (stem + ".events.json")).string());

  if (a.detections) {
    const NoiseConfig noise = usage_on_error([&] { return noise_config_from_json(g.section("noise")); });
    const SyntheticDetections d = synthesize_detections(s, noise);
    echo["noise"] = to_json(noise);
    save_annotations(d.detections, dir / (stem + ".det.jsonl"), echo);
    Json totals, frames = Json::array();
    for (std::size_t k = 0; k < kOutcomeCount; ++k) totals[std::string(to_string(static_cast<Outcome>(k)))] = d.totals[k];
    for (const InjectedFrame& f : d.injected) {
      Json c;
      for (std::size_t k = 0; k < kOutcomeCount; ++k) c[std::string(to_string(static_cast<Outcome>(k)))] = f.counts[k];
      frames.push_back({{"frame", f.frame}, {"counts", c}});
    }
    write_json({{"config", echo}, {"totals", totals}, {"frames", frames}}, (dir / (stem + ".injected.json")).string());
  }
  std::cerr << "simulated " << s.sequence.cells.size() << " instances over " << s.sequence.frames.size()
            << " frames: " << t.divisions << " divisions, " << t.fusions << " fusions\n";
  return kOk;
}

// ---- export --------------------------------------------------------------

struct ExportArgs {
  std::string frames, sequence, output, image_root;
  int border = 5;
};

int cmd_export_splits(const ExportArgs& a) {
  if (a.frames.empty() == a.sequence.empty())
    throw UsageError("export splits: give exactly one of --frames or --sequence");
  const std::vector<FrameIndex> universe =
      a.sequence.empty() ? parse_frames(a.frames) : load_annotations(fs::path(a.sequence)).frames;
  const auto specs = define_splits(universe);
  check_splits(specs, universe);
  Json arr = Json::array();
  for (const SplitSpec& s : specs) {
    const auto frames = s.select(universe);
    arr.push_back({{"name", s.name},
                   {"first", s.first},
                   {"last", s.last},
                   {"exclude", s.exclude},
                   {"size", frames.size()},
                   {"frames", frames}});
  }
  write_json({{"splits", arr}}, a.output);
  return kOk;
}

int cmd_export_patches(const ExportArgs& a) {
  const fs::path seq_path(a.sequence);
  const SequenceManifest m = load_annotations(seq_path);
  std::optional<fs::path> root;
  if (!a.image_root.empty())
    root = fs::path(a.image_root);
  else if (!m.frame_images.empty())
    root = seq_path.parent_path();
  const fs::path dir(a.output);
  fs::create_directories(dir);
  const auto records = export_patches(m, a.border, root, root ? std::optional<fs::path>(dir) : std::nullopt);
  auto out = open_out(dir / "patches.jsonl");
  write_patch_manifest(records, out);
  std::size_t missing = 0;
  for (const auto& r : records) missing += r.missing_image;
  std::cerr << records.size() << " patches";
  if (missing) std::cerr << ", " << missing << " without a frame image";
  std::cerr << '\n';
  return kOk;
}

int cmd_export_features(const ExportArgs& a) {
  const FeatureTable t = export_features(load_annotations(fs::path(a.sequence)));
  for (const FeatureWarning& w : t.warnings)
    std::cerr << "warning: " << w.roi << " frame " << w.frame << " id " << w.id.value << ": " << w.message << '\n';
  if (a.output.empty() || a.output == "-") {
    write_features_csv(t, std::cout);
  } else {
    auto out = open_out(a.output);
    write_features_csv(t, out);
  }
  return kOk;
}

// ---- stats / serve -------------------------------------------------------

int cmd_stats(const std::string& dir, const std::string& output) {
  const auto seqs = load_dataset_dir(dir);
  write_json(stats_to_json(dataset_stats(seqs)), output);
  return kOk;
}

struct ServeArgs {
  std::vector<std::string> sequences, detections;
  std::string host = "127.0.0.1", image_root;
  int port = 8080;
};

HttpService* g_service = nullptr;

int cmd_serve(const Global& g, const ServeArgs& a) {
  Workspace ws(g.jobs);
  HttpOptions opt;
  opt.eval = usage_on_error([&] { return eval_config_from_json(g.section("evaluate")); });
  for (const std::string& p : a.sequences) ws.add_sequence(load_annotations(fs::path(p)));
  for (const std::string& p : a.detections) {
    SequenceManifest d = load_annotations(fs::path(p));
    const std::string roi = d.roi;
    ws.set_detections(roi, std::move(d));
  }
  if (!a.image_root.empty())
    opt.image_root = fs::path(a.image_root);
  else if (!a.sequences.empty())
    opt.image_root = fs::path(a.sequences.front()).parent_path();
  HttpService service(ws, opt);
  const int port = service.bind(a.host, a.port);
  if (port < 0) throw Error("cannot bind " + a.host + ":" + std::to_string(a.port));
  g_service = &service;
  std::signal(SIGINT, [](int) {
    if (g_service) g_service->stop();
  });
  std::signal(SIGTERM, [](int) {
    if (g_service) g_service->stop();
  });
  std::cerr << "serving " << a.sequences.size() << " sequence(s) on http://" << a.host << ":" << port << "/api/v1/\n";
  service.listen();
  g_service = nullptr;
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lineage tracking, retrospective labeling and detection evaluation for iPSC time-lapse data"};
  app.require_subcommand(1);
  Global g;
  app.add_option("--config", g.config_path, "JSON config with track/evaluate/simulate/noise sections")
      ->check(CLI::ExistingFile);
  app.add_option("-j,--jobs", g.jobs, "Worker threads (results do not depend on it)")->check(CLI::Range(1u, 256u));

  TrackArgs ta;
  auto* track = app.add_subcommand("track", "Track a sequence into a lineage forest (batch mode)");
  track->add_option("sequence", ta.input, "Annotation file")->required();
  track->add_option("-o,--output", ta.output, "Forest file to write")->required();
  track->add_option("--direction", ta.direction)->check(CLI::IsMember({"backward", "forward"}));
  track->add_option("--events", ta.events, "Also write the committed events as JSON");
  track->add_option("--iou-gate", ta.iou_gate);
  track->add_option("--centroid-gate", ta.centroid_gate);
  track->add_option("--size-ratio-low", ta.size_low);
  track->add_option("--size-ratio-high", ta.size_high);
  track->add_option("--event-overlap-min", ta.overlap_min);
  track->add_option("--shape-change-max", ta.shape_max);

  PropagateArgs pa;
  auto* propagate = app.add_subcommand("propagate", "Propagate final-frame labels backwards through a forest");
  propagate->add_option("forest", pa.forest, "Forest file")->required();
  propagate->add_option("--seeds", pa.seeds, "Seeds JSON (default: labels on final-frame nodes)");
  propagate->add_option("-o,--output", pa.output, "Labeled forest to write")->required();
  propagate->add_option("--report", pa.report, "Write the labels/conflicts report as JSON ('-' for stdout)");

  EvaluateArgs ea;
  auto* evaluate = app.add_subcommand("evaluate", "Score detections against ground truth");
  evaluate->add_option("--gt", ea.gt, "Ground-truth annotation file")->required();
  evaluate->add_option("--det", ea.det, "Detection file")->required();
  evaluate->add_option("-o,--output", ea.output, "Directory for report.json and report.csv")->required();
  evaluate->add_option("--match-iou", ea.match_iou);
  evaluate->add_option("--part-containment", ea.part_containment);
  evaluate->add_option("--fp-max", ea.fp_max, "Partial AUC FPR limits (repeatable)");

  PlanArgs pl;
  auto* plan = app.add_subcommand("plan", "Subsequence plan for video detectors");
  plan->add_option("--frames", pl.frames, "Frame list, e.g. 1-16 or 146-162,164");
  plan->add_option("--sequence", pl.sequence, "Take the frame list from an annotation file");
  plan->add_option("--fixed", pl.fixed, "Fixed chunk size (default: incremental prefixes)")->check(CLI::PositiveNumber);
  plan->add_option("--breakpoints", pl.breakpoints, "Frames that start a new run");
  plan->add_option("-o,--output", pl.output, "Plan JSON ('-' or omitted for stdout)");

  SimulateArgs sa;
  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic scenario with ground-truth lineage");
  simulate->add_option("-o,--output", sa.output, "Output directory")->required();
  simulate->add_option("--seed", sa.seed);
  simulate->add_option("--frames", sa.frames);
  simulate->add_option("--initial-cells", sa.initial_cells);
  simulate->add_option("--roi", sa.roi);
  simulate->add_flag("--detections", sa.detections, "Also synthesize detections using the noise section");
  simulate->add_flag("--images", sa.images, "Render PGM frame images");

  ExportArgs xa;
  auto* exp = app.add_subcommand("export", "Dataset exports");
  exp->require_subcommand(1);
  auto* splits = exp->add_subcommand("splits", "Early/late/test frame splits");
  splits->add_option("--frames", xa.frames, "Frame universe, e.g. 146-275");
  splits->add_option("--sequence", xa.sequence, "Take the frame universe from an annotation file");
  splits->add_option("-o,--output", xa.output, "Splits JSON ('-' or omitted for stdout)");
  auto* patches = exp->add_subcommand("patches", "Per-cell image patches of labeled cells");
  patches->add_option("sequence", xa.sequence)->required();
  patches->add_option("-o,--output", xa.output, "Output directory")->required();
  patches->add_option("--border", xa.border, "Context border in pixels")->check(CLI::NonNegativeNumber);
  patches->add_option("--image-root", xa.image_root, "Directory frame image paths are relative to");
  auto* features = exp->add_subcommand("features", "Shape feature table of labeled cells (CSV)");
  features->add_option("sequence", xa.sequence)->required();
  features->add_option("-o,--output", xa.output, "CSV file ('-' or omitted for stdout)");

  std::string stats_dir, stats_out;
  auto* stats = app.add_subcommand("stats", "Sequence/frame/cell counts of a dataset directory");
  stats->add_option("directory", stats_dir)->required()->check(CLI::ExistingDirectory);
  stats->add_option("-o,--output", stats_out, "JSON file ('-' or omitted for stdout)");

  ServeArgs sv;
  auto* serve = app.add_subcommand("serve", "Run the review service");
  serve->add_option("sequences", sv.sequences, "Annotation files to serve");
  serve->add_option("--detections", sv.detections, "Detection files, paired with sequences by ROI");
  serve->add_option("--host", sv.host);
  serve->add_option("--port", sv.port)->check(CLI::Range(0, 65535));
  serve->add_option("--image-root", sv.image_root);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    load_config(g);
    if (*track) return cmd_track(g, ta);
    if (*propagate) return cmd_propagate(g, pa);
    if (*evaluate) return cmd_evaluate(g, ea);
    if (*plan) return cmd_plan(g, pl);
    if (*simulate) return cmd_simulate(g, sa);
    if (*splits) return cmd_export_splits(xa);
    if (*patches) return cmd_export_patches(xa);
    if (*features) return cmd_export_features(xa);
    if (*stats) return cmd_stats(stats_dir, stats_out);
    if (*serve) return cmd_serve(g, sv);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInvalid;
  }
  return kUsage;
}
