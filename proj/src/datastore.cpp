#include "ipsc/datastore.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace ipsc {

namespace {

[[noreturn]] void fail(const std::string& where, const std::string& what) { throw Error(where + ": " + what); }

const Json& field(const Json& j, const char* name, const std::string& where) {
  auto it = j.find(name);
  if (it == j.end()) fail(where, std::string("missing field '") + name + "'");
  return *it;
}

std::string get_string(const Json& j, const char* name, const std::string& where) {
  const Json& v = field(j, name, where);
  if (!v.is_string()) fail(where, std::string("field '") + name + "' must be a string");
  return v.get<std::string>();
}

std::int64_t get_int(const Json& j, const char* name, const std::string& where) {
  const Json& v = field(j, name, where);
  if (!v.is_number_integer()) fail(where, std::string("field '") + name + "' must be an integer");
  return v.get<std::int64_t>();
}

std::uint64_t get_id(const Json& j, const char* name, const std::string& where) {
  const Json& v = field(j, name, where);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
    fail(where, std::string("field '") + name + "' must be a non-negative integer");
  return v.get<std::uint64_t>();
}

double get_number(const Json& v, const std::string& what, const std::string& where) {
  if (!v.is_number()) fail(where, what + " must be a number");
  return v.get<double>();
}

std::vector<CellId> get_ids(const Json& j, const char* name, const std::string& where) {
  const Json& v = field(j, name, where);
  if (!v.is_array()) fail(where, std::string("field '") + name + "' must be an array of ids");
  std::vector<CellId> out;
  for (const Json& e : v) {
    if (!e.is_number_integer() || e.get<std::int64_t>() < 0)
      fail(where, std::string("field '") + name + "' must hold non-negative integers");
    out.push_back(CellId{e.get<std::uint64_t>()});
  }
  return out;
}

FrameSize get_frame_size(const Json& j, const std::string& where) {
  const Json& v = field(j, "frame_size", where);
  if (!v.is_array() || v.size() != 2 || !v[0].is_number_integer() || !v[1].is_number_integer())
    fail(where, "field 'frame_size' must be [width, height]");
  FrameSize fs{v[0].get<int>(), v[1].get<int>()};
  if (fs.width <= 0 || fs.height <= 0) fail(where, "field 'frame_size' must be positive");
  return fs;
}

std::vector<FrameIndex> get_frames(const Json& j, const std::string& where) {
  const Json& v = field(j, "frames", where);
  if (!v.is_array()) fail(where, "field 'frames' must be an array of frame ids");
  std::vector<FrameIndex> out;
  for (const Json& f : v) {
    if (!f.is_number_integer()) fail(where, "field 'frames' must hold integers");
    out.push_back(f.get<FrameIndex>());
  }
  return out;
}

Json header_for(const SequenceManifest& m, const char* type, const Json& config) {
  Json h;
  h["type"] = type;
  h["schema"] = kSchemaVersion;
  h["roi"] = m.roi;
  h["frame_size"] = {m.frame_size.width, m.frame_size.height};
  h["frames"] = m.frames;
  h["provenance"] = to_string(m.provenance);
  if (m.roi_origin) h["roi_origin"] = {m.roi_origin->x, m.roi_origin->y};
  if (!m.frame_images.empty()) {
    Json images = Json::object();
    for (const auto& [f, path] : m.frame_images) images[std::to_string(f)] = path;
    h["frame_images"] = images;
  }
  if (!config.is_null()) h["config"] = config;
  return h;
}

// Fills the manifest-level fields from a header record.
void read_header(const Json& h, SequenceManifest& m, const std::string& where) {
  if (h.contains("schema")) {
    const std::string schema = get_string(h, "schema", where);
    if (schema != kSchemaVersion) fail(where, "unsupported schema '" + schema + "'");
  }
  m.roi = get_string(h, "roi", where);
  m.frame_size = get_frame_size(h, where);
  m.frames = get_frames(h, where);
  if (h.contains("provenance")) {
    try {
      m.provenance = parse_provenance(get_string(h, "provenance", where));
    } catch (const Error& e) {
      fail(where, std::string("field 'provenance': ") + e.what());
    }
  }
  if (h.contains("roi_origin")) {
    const Json& o = h["roi_origin"];
    if (!o.is_array() || o.size() != 2) fail(where, "field 'roi_origin' must be [x, y]");
    m.roi_origin = Point{get_number(o[0], "roi_origin[0]", where), get_number(o[1], "roi_origin[1]", where)};
  }
  if (h.contains("frame_images")) {
    const Json& imgs = h["frame_images"];
    if (!imgs.is_object()) fail(where, "field 'frame_images' must map frame ids to paths");
    for (auto it = imgs.begin(); it != imgs.end(); ++it) {
      FrameIndex f = 0;
      const std::string& key = it.key();
      auto [ptr, ec] = std::from_chars(key.data(), key.data() + key.size(), f);
      if (ec != std::errc() || ptr != key.data() + key.size())
        fail(where, "field 'frame_images' has a non-numeric frame id '" + key + "'");
      if (!it.value().is_string()) fail(where, "field 'frame_images' values must be strings");
      m.frame_images[f] = it.value().get<std::string>();
    }
  }
}

struct Record {
  Json json;
  std::string where;
  std::string type;
};

// Parses every non-blank line. The caller checks record types.
std::vector<Record> read_records(std::istream& in, const std::string& source) {
  std::vector<Record> out;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = source + ":" + std::to_string(n);
    Record r{{}, where, {}};
    try {
      r.json = Json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      fail(where, std::string("invalid JSON: ") + e.what());
    }
    if (!r.json.is_object()) fail(where, "record must be a JSON object");
    r.type = get_string(r.json, "type", where);
    out.push_back(std::move(r));
  }
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "' for reading");
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  return out;
}

Json edge_json(const Edge& e) {
  Json j;
  j["type"] = "edge";
  j["earlier"] = e.earlier.value;
  j["later"] = e.later.value;
  j["kind"] = to_string(e.kind);
  return j;
}

std::string field_text(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

}  // namespace

std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

Json cell_to_json(const CellInstance& c) {
  Json j;
  j["type"] = "cell";
  j["roi"] = c.roi;
  j["id"] = c.id.value;
  j["frame"] = c.frame;
  Json poly = Json::array();
  for (const Point& p : c.mask.polygon()) poly.push_back({p.x, p.y});
  j["polygon"] = poly;
  j["label"] = to_string(c.label);
  if (c.confidence) j["confidence"] = *c.confidence;
  if (c.track) j["track"] = c.track->value;
  return j;
}

CellInstance cell_from_json(const Json& j, FrameSize frame, const std::string& where) {
  CellInstance c;
  c.roi = get_string(j, "roi", where);
  c.id = CellId{get_id(j, "id", where)};
  c.frame = get_int(j, "frame", where);
  const Json& poly = field(j, "polygon", where);
  if (!poly.is_array()) fail(where, "field 'polygon' must be an array of [x, y] pairs");
  std::vector<Point> pts;
  for (const Json& p : poly) {
    if (!p.is_array() || p.size() != 2) fail(where, "field 'polygon' must be an array of [x, y] pairs");
    pts.push_back({get_number(p[0], "polygon x", where), get_number(p[1], "polygon y", where)});
  }
  try {
    c.mask = Mask(std::move(pts), frame);
  } catch (const GeometryError& e) {
    fail(where, std::string("field 'polygon': ") + e.what());
  }
  if (j.contains("label")) {
    try {
      c.label = parse_label(get_string(j, "label", where));
    } catch (const Error& e) {
      fail(where, std::string("field 'label': ") + e.what());
    }
  }
  if (j.contains("confidence") && !j["confidence"].is_null()) {
    const double v = get_number(j["confidence"], "field 'confidence'", where);
    if (!(v >= 0.0 && v <= 1.0)) fail(where, "field 'confidence' must lie in [0, 1]");
    c.confidence = v;
  }
  if (j.contains("track") && !j["track"].is_null()) c.track = TrackId{get_id(j, "track", where)};
  return c;
}

void save_annotations(const SequenceManifest& m, std::ostream& out, const Json& config) {
  SequenceManifest sorted = m;
  sorted.canonicalize();
  out << header_for(sorted, "sequence", config).dump() << '\n';
  for (const CellInstance& c : sorted.cells) out << cell_to_json(c).dump() << '\n';
}

void save_annotations(const SequenceManifest& m, const std::filesystem::path& path, const Json& config) {
  auto out = open_out(path);
  save_annotations(m, out, config);
}

SequenceManifest load_annotations(std::istream& in, const std::string& source) {
  const auto records = read_records(in, source);
  SequenceManifest m;
  if (records.empty()) return m;
  const Record& head = records.front();
  if (head.type != "sequence" && head.type != "forest")
    fail(head.where, "first record must be a 'sequence' or 'forest' header, got '" + head.type + "'");
  read_header(head.json, m, head.where);
  for (std::size_t i = 1; i < records.size(); ++i) {
    const Record& r = records[i];
    if (r.type == "edge") continue;
    if (r.type != "cell") fail(r.where, "unexpected record type '" + r.type + "'");
    m.cells.push_back(cell_from_json(r.json, m.frame_size, r.where));
  }
  m.canonicalize();
  try {
    m.validate();
  } catch (const Error& e) {
    fail(source, e.what());
  }
  return m;
}

SequenceManifest load_annotations(const std::filesystem::path& path) {
  auto in = open_in(path);
  return load_annotations(in, path.string());
}

void save_forest(const LineageForest& f, std::ostream& out, const Json& config) {
  SequenceManifest m;
  m.roi = f.roi;
  m.frame_size = f.frame_size;
  m.frames = f.frames;
  m.provenance = Provenance::Tracker;
  Json h = header_for(m, "forest", nullptr);
  h["final_frame"] = f.final_frame;
  h["revision"] = f.revision;
  if (!config.is_null()) h["config"] = config;
  out << h.dump() << '\n';
  std::vector<const CellInstance*> nodes;
  for (const auto& [id, c] : f.nodes) nodes.push_back(&c);
  std::sort(nodes.begin(), nodes.end(), [](const CellInstance* a, const CellInstance* b) {
    return a->frame != b->frame ? a->frame < b->frame : a->id < b->id;
  });
  for (const CellInstance* c : nodes) out << cell_to_json(*c).dump() << '\n';
  for (const Edge& e : f.edge_list()) out << edge_json(e).dump() << '\n';
}

void save_forest(const LineageForest& f, const std::filesystem::path& path, const Json& config) {
  auto out = open_out(path);
  save_forest(f, out, config);
}

LineageForest load_forest(std::istream& in, const std::string& source) {
  const auto records = read_records(in, source);
  if (records.empty()) fail(source, "empty forest file");
  const Record& head = records.front();
  if (head.type != "forest") fail(head.where, "first record must be a 'forest' header, got '" + head.type + "'");
  SequenceManifest m;
  read_header(head.json, m, head.where);
  LineageForest f;
  f.roi = m.roi;
  f.frame_size = m.frame_size;
  f.frames = m.frames;
  f.final_frame = get_int(head.json, "final_frame", head.where);
  f.revision = get_id(head.json, "revision", head.where);
  for (std::size_t i = 1; i < records.size(); ++i) {
    const Record& r = records[i];
    if (r.type == "cell") {
      CellInstance c = cell_from_json(r.json, f.frame_size, r.where);
      const CellId id = c.id;
      if (!f.nodes.emplace(id, std::move(c)).second) fail(r.where, "duplicate cell id " + std::to_string(id.value));
    } else if (r.type == "edge") {
      Edge e{CellId{get_id(r.json, "earlier", r.where)}, CellId{get_id(r.json, "later", r.where)}};
      try {
        e.kind = parse_edge_kind(get_string(r.json, "kind", r.where));
      } catch (const Error& ex) {
        fail(r.where, std::string("field 'kind': ") + ex.what());
      }
      f.add_edge(e);
    } else {
      fail(r.where, "unexpected record type '" + r.type + "'");
    }
  }
  return f;
}

LineageForest load_forest(const std::filesystem::path& path) {
  auto in = open_in(path);
  return load_forest(in, path.string());
}

Json seeds_to_json(const SeedLabels& s) {
  Json arr = Json::array();
  for (const auto& [id, label] : s) arr.push_back({{"id", id.value}, {"label", to_string(label)}});
  return Json{{"seeds", arr}};
}

SeedLabels seeds_from_json(const Json& j) {
  const std::string where = "seeds";
  const Json& arr = field(j, "seeds", where);
  if (!arr.is_array()) fail(where, "field 'seeds' must be an array");
  SeedLabels out;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const std::string w = "seeds[" + std::to_string(i) + "]";
    if (!arr[i].is_object()) fail(w, "seed must be an object");
    const CellId id{get_id(arr[i], "id", w)};
    Label l;
    try {
      l = parse_label(get_string(arr[i], "label", w));
    } catch (const Error& e) {
      fail(w, std::string("field 'label': ") + e.what());
    }
    if (l == Label::Unlabeled) fail(w, "seed label must be iPSC or DfC");
    out[id] = l;
  }
  return out;
}

SeedLabels load_seeds(const std::filesystem::path& path) {
  auto in = open_in(path);
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    fail(path.string(), std::string("invalid JSON: ") + e.what());
  }
  return seeds_from_json(j);
}

Json edit_to_json(const Edit& e) {
  auto ids = [](const std::vector<CellId>& v) {
    Json a = Json::array();
    for (CellId id : v) a.push_back(id.value);
    return a;
  };
  return std::visit(
      [&](const auto& op) -> Json {
        using T = std::decay_t<decltype(op)>;
        if constexpr (std::is_same_v<T, edit::SetEventKind>)
          return {{"op", "set_event_kind"}, {"earlier", ids(op.earlier)}, {"later", ids(op.later)},
                  {"kind", to_string(op.kind)}};
        else if constexpr (std::is_same_v<T, edit::AddEdge>)
          return {{"op", "add_edge"}, {"earlier", op.edge.earlier.value}, {"later", op.edge.later.value},
                  {"kind", to_string(op.edge.kind)}};
        else if constexpr (std::is_same_v<T, edit::RemoveEdge>)
          return {{"op", "remove_edge"}, {"earlier", op.earlier.value}, {"later", op.later.value}};
        else if constexpr (std::is_same_v<T, edit::SplitTrack>)
          return {{"op", "split_track"}, {"node", op.node.value}};
        else if constexpr (std::is_same_v<T, edit::MergeTracks>)
          return {{"op", "merge_tracks"}, {"tail", op.tail.value}, {"head", op.head.value}};
        else
          return {{"op", "set_seed_label"}, {"node", op.node.value}, {"label", to_string(op.label)}};
      },
      e);
}

Edit edit_from_json(const Json& j) {
  const std::string where = "edit";
  if (!j.is_object()) fail(where, "edit must be a JSON object");
  const std::string op = get_string(j, "op", where);
  auto kind = [&] {
    try {
      return parse_edge_kind(get_string(j, "kind", where));
    } catch (const Error& e) {
      if (j.contains("kind") && j["kind"].is_string()) fail(where, std::string("field 'kind': ") + e.what());
      throw;
    }
  };
  if (op == "set_event_kind") return edit::SetEventKind{get_ids(j, "earlier", where), get_ids(j, "later", where), kind()};
  if (op == "add_edge")
    return edit::AddEdge{Edge{CellId{get_id(j, "earlier", where)}, CellId{get_id(j, "later", where)}, kind()}};
  if (op == "remove_edge") return edit::RemoveEdge{CellId{get_id(j, "earlier", where)}, CellId{get_id(j, "later", where)}};
  if (op == "split_track") return edit::SplitTrack{CellId{get_id(j, "node", where)}};
  if (op == "merge_tracks") return edit::MergeTracks{CellId{get_id(j, "tail", where)}, CellId{get_id(j, "head", where)}};
  if (op == "set_seed_label") {
    Label l;
    try {
      l = parse_label(get_string(j, "label", where));
    } catch (const Error& e) {
      fail(where, std::string("field 'label': ") + e.what());
    }
    return edit::SetSeedLabel{CellId{get_id(j, "node", where)}, l};
  }
  fail(where, "unknown op '" + op + "'");
}

std::vector<FrameIndex> SplitSpec::select(std::span<const FrameIndex> universe) const {
  std::vector<FrameIndex> out;
  for (FrameIndex f : universe)
    if (f >= first && f <= last && std::find(exclude.begin(), exclude.end(), f) == exclude.end()) out.push_back(f);
  return out;
}

std::vector<SplitSpec> define_splits(std::span<const FrameIndex> universe) {
  if (universe.empty() || *std::min_element(universe.begin(), universe.end()) > 146 ||
      *std::max_element(universe.begin(), universe.end()) < 275)
    throw Error("default splits need frames spanning 146..275");
  std::vector<SplitSpec> specs{
      {"early", 163, 202, {186, 189}},
      {"late", 203, 275, {}},
      {"test", 146, 162, {155}},
  };
  check_splits(specs, universe);
  return specs;
}

void check_splits(std::span<const SplitSpec> specs, std::span<const FrameIndex> universe) {
  std::map<FrameIndex, std::string> owner;
  std::set<std::string> names;
  for (const SplitSpec& s : specs) {
    if (!names.insert(s.name).second) throw Error("split '" + s.name + "' is defined twice");
    if (s.first > s.last) throw Error("split '" + s.name + "' has first > last");
    for (FrameIndex f : s.exclude)
      if (f < s.first || f > s.last)
        throw Error("split '" + s.name + "' excludes frame " + std::to_string(f) + " outside its range");
    for (FrameIndex f : s.select(universe)) {
      auto [it, fresh] = owner.emplace(f, s.name);
      if (!fresh)
        throw Error("splits '" + it->second + "' and '" + s.name + "' overlap at frame " + std::to_string(f));
    }
  }
}

GrayImage read_pgm(const std::filesystem::path& path) {
  auto in = open_in(path);
  auto token = [&] {
    std::string t;
    for (;;) {
      const int c = in.get();
      if (c == EOF) break;
      if (c == '#') {
        std::string rest;
        std::getline(in, rest);
        continue;
      }
      if (std::isspace(c)) {
        if (!t.empty()) break;
        continue;
      }
      t += static_cast<char>(c);
    }
    return t;
  };
  if (token() != "P5") throw Error(path.string() + ": not a binary PGM (P5) file");
  GrayImage img;
  int maxval = 0;
  try {
    img.width = std::stoi(token());
    img.height = std::stoi(token());
    maxval = std::stoi(token());
  } catch (const std::exception&) {
    throw Error(path.string() + ": malformed PGM header");
  }
  if (img.width <= 0 || img.height <= 0 || maxval <= 0 || maxval > 255)
    throw Error(path.string() + ": unsupported PGM dimensions or depth");
  img.pixels.resize(static_cast<std::size_t>(img.width) * img.height);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size())) throw Error(path.string() + ": truncated PGM");
  return img;
}

void write_pgm(const GrayImage& img, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
}

GrayImage crop(const GrayImage& img, const BBox& box) {
  const BBox b{std::max(0, box.x_min), std::max(0, box.y_min), std::min(img.width, box.x_max),
               std::min(img.height, box.y_max)};
  GrayImage out;
  out.width = std::max(0, b.width());
  out.height = std::max(0, b.height());
  out.pixels.reserve(static_cast<std::size_t>(out.width) * out.height);
  for (int y = b.y_min; y < b.y_max; ++y)
    for (int x = b.x_min; x < b.x_max; ++x) out.pixels.push_back(img.pixels[static_cast<std::size_t>(y) * img.width + x]);
  return out;
}

GrayImage render_frame(const SequenceManifest& m, FrameIndex frame) {
  GrayImage img;
  img.width = m.frame_size.width;
  img.height = m.frame_size.height;
  img.pixels.assign(static_cast<std::size_t>(img.width) * img.height, 32);
  for (const CellInstance& c : m.cells) {
    if (c.frame != frame) continue;
    for (const Span& s : c.mask.raster().spans())
      for (int x = s.x_begin; x < s.x_end; ++x) img.pixels[static_cast<std::size_t>(s.y) * img.width + x] = 176;
  }
  return img;
}

std::vector<PatchRecord> export_patches(const SequenceManifest& m, int border,
                                        const std::optional<std::filesystem::path>& image_root,
                                        const std::optional<std::filesystem::path>& out_dir) {
  if (border < 0) throw Error("patch border must be non-negative");
  std::vector<PatchRecord> out;
  std::map<FrameIndex, std::optional<GrayImage>> images;
  auto image_of = [&](FrameIndex f) -> const std::optional<GrayImage>& {
    auto it = images.find(f);
    if (it != images.end()) return it->second;
    std::optional<GrayImage> img;
    auto path = m.frame_images.find(f);
    if (image_root && path != m.frame_images.end() && std::filesystem::exists(*image_root / path->second))
      img = read_pgm(*image_root / path->second);
    return images.emplace(f, std::move(img)).first->second;
  };
  SequenceManifest sorted = m;
  sorted.canonicalize();
  for (const CellInstance& c : sorted.cells) {
    if (c.label == Label::Unlabeled) continue;
    PatchRecord r{c.roi, c.frame, c.id, c.label, dilate_bbox(c.bbox(), border, m.frame_size), std::nullopt, true};
    if (const auto& img = image_of(c.frame); img && out_dir) {
      const std::string name = c.roi + "_" + std::to_string(c.frame) + "_" + std::to_string(c.id.value) + ".pgm";
      write_pgm(crop(*img, r.box), *out_dir / name);
      r.crop = name;
      r.missing_image = false;
    }
    out.push_back(std::move(r));
  }
  return out;
}

void write_patch_manifest(std::span<const PatchRecord> records, std::ostream& out) {
  for (const PatchRecord& r : records) {
    Json j;
    j["type"] = "patch";
    j["roi"] = r.roi;
    j["frame"] = r.frame;
    j["id"] = r.id.value;
    j["label"] = to_string(r.label);
    j["bbox"] = {r.box.x_min, r.box.y_min, r.box.x_max, r.box.y_max};
    j["crop"] = r.crop ? Json(*r.crop) : Json(nullptr);
    if (r.missing_image) j["flag"] = "missing_image";
    out << j.dump() << '\n';
  }
}

FeatureTable export_features(const SequenceManifest& m) {
  FeatureTable t;
  SequenceManifest sorted = m;
  sorted.canonicalize();
  for (const CellInstance& c : sorted.cells) {
    if (c.label == Label::Unlabeled) continue;
    try {
      t.rows.push_back({c.roi, c.frame, c.id, shape_features(c.mask), c.label});
    } catch (const GeometryError& e) {
      t.warnings.push_back({c.roi, c.frame, c.id, e.what()});
    }
  }
  return t;
}

void write_features_csv(const FeatureTable& t, std::ostream& out) {
  out << "roi,frame,id";
  for (const auto& col : kShapeFeatureColumns) out << ',' << col.name;
  out << ",label\n";
  for (const FeatureRow& r : t.rows) {
    out << field_text(r.roi) << ',' << r.frame << ',' << r.id.value;
    for (const auto& col : kShapeFeatureColumns) out << ',' << format_number(r.features.*col.member);
    out << ',' << to_string(r.label) << '\n';
  }
}

std::optional<double> DatasetStats::dfc_fraction() const {
  if (ipsc + dfc == 0) return std::nullopt;
  return static_cast<double>(dfc) / static_cast<double>(ipsc + dfc);
}

DatasetStats dataset_stats(std::span<const SequenceManifest> sequences) {
  DatasetStats s;
  s.sequences = sequences.size();
  for (const SequenceManifest& m : sequences) {
    s.frames += m.frames.size();
    s.cells += m.cells.size();
    for (const CellInstance& c : m.cells) {
      if (c.label == Label::iPSC) ++s.ipsc;
      else if (c.label == Label::DfC) ++s.dfc;
      else ++s.unlabeled;
    }
  }
  return s;
}

Json stats_to_json(const DatasetStats& s) {
  Json j;
  j["sequences"] = s.sequences;
  j["frames"] = s.frames;
  j["cells"] = s.cells;
  j["labels"] = {{"iPSC", s.ipsc}, {"DfC", s.dfc}, {"unlabeled", s.unlabeled}};
  j["dfc_fraction"] = s.dfc_fraction() ? Json(*s.dfc_fraction()) : Json(nullptr);
  return j;
}

std::vector<SequenceManifest> load_dataset_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw Error("'" + dir.string() + "' is not a directory");
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".jsonl") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  std::vector<SequenceManifest> out;
  for (const auto& f : files) {
    SequenceManifest m = load_annotations(f);
    if (m.provenance == Provenance::Manual) out.push_back(std::move(m));
  }
  return out;
}

}  // namespace ipsc
