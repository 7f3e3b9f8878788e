#pragma once

// Line-delimited JSON annotation, detection and forest files, dataset
// splits, patch and feature exports, dataset statistics.
//
// Every file starts with one header record followed by one record per line;
// docs/file-formats.md lists the fields.

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ipsc/lineage.hpp"
#include "ipsc/sequence.hpp"

namespace ipsc {

inline constexpr std::string_view kSchemaVersion = "ipsc-lineage/1";

/// Key order is preserved so records read like the documented layout.
using Json = nlohmann::ordered_json;

/// Shortest decimal text that reads back to the same double.
std::string format_number(double v);

Json cell_to_json(const CellInstance& c);
/// `where` prefixes error messages (e.g. "seq.jsonl:12").
CellInstance cell_from_json(const Json& j, FrameSize frame, const std::string& where);

/// Writes header + cells. `config`, when not null, is echoed in the header.
void save_annotations(const SequenceManifest& m, std::ostream& out, const Json& config = nullptr);
void save_annotations(const SequenceManifest& m, const std::filesystem::path& path,
                      const Json& config = nullptr);

/// Reads sequence, detection and forest files (edge records are skipped).
/// An empty file yields an empty manifest. Throws Error naming the line and
/// field on schema violations.
SequenceManifest load_annotations(std::istream& in, const std::string& source = "<stream>");
SequenceManifest load_annotations(const std::filesystem::path& path);

void save_forest(const LineageForest& f, std::ostream& out, const Json& config = nullptr);
void save_forest(const LineageForest& f, const std::filesystem::path& path, const Json& config = nullptr);
LineageForest load_forest(std::istream& in, const std::string& source = "<stream>");
LineageForest load_forest(const std::filesystem::path& path);

/// Seeds file: {"seeds": [{"id": 7, "label": "iPSC"}, ...]}.
Json seeds_to_json(const SeedLabels& s);
SeedLabels seeds_from_json(const Json& j);
SeedLabels load_seeds(const std::filesystem::path& path);

Json edit_to_json(const Edit& e);
Edit edit_from_json(const Json& j);

struct SplitSpec {
  std::string name;
  FrameIndex first = 0;
  FrameIndex last = 0;
  std::vector<FrameIndex> exclude;

  /// Frames of `universe` inside [first, last] and not excluded.
  std::vector<FrameIndex> select(std::span<const FrameIndex> universe) const;
};

/// early 163-202, late 203-275, test 146-162; blurry frames 155, 186, 189
/// excluded. Throws Error unless the universe spans 146..275.
std::vector<SplitSpec> define_splits(std::span<const FrameIndex> universe);

/// Throws Error when specs are malformed (first > last, exclusions outside the
/// range) or select overlapping frames.
void check_splits(std::span<const SplitSpec> specs, std::span<const FrameIndex> universe);

struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major
};

GrayImage read_pgm(const std::filesystem::path& path);
void write_pgm(const GrayImage& img, const std::filesystem::path& path);
GrayImage crop(const GrayImage& img, const BBox& box);

/// Flat synthetic rendering of one frame (cells bright on a dark background).
GrayImage render_frame(const SequenceManifest& m, FrameIndex frame);

struct PatchRecord {
  std::string roi;
  FrameIndex frame = 0;
  CellId id;
  Label label = Label::Unlabeled;
  BBox box;
  std::optional<std::string> crop;  // path relative to the patch directory
  bool missing_image = false;
};

/// One record per labeled cell with its bbox dilated by `border`. When
/// `image_root` is given, frame images listed in the manifest are read from
/// there and crops are written to `out_dir`; cells whose frame image is
/// absent are flagged missing_image.
std::vector<PatchRecord> export_patches(const SequenceManifest& m, int border,
                                        const std::optional<std::filesystem::path>& image_root = std::nullopt,
                                        const std::optional<std::filesystem::path>& out_dir = std::nullopt);
void write_patch_manifest(std::span<const PatchRecord> records, std::ostream& out);

struct FeatureRow {
  std::string roi;
  FrameIndex frame = 0;
  CellId id;
  ShapeFeatures features;
  Label label = Label::Unlabeled;
};

struct FeatureWarning {
  std::string roi;
  FrameIndex frame = 0;
  CellId id;
  std::string message;
};

struct FeatureTable {
  std::vector<FeatureRow> rows;
  std::vector<FeatureWarning> warnings;
};

/// Rows for labeled cells; degenerate masks become warnings.
FeatureTable export_features(const SequenceManifest& m);
void write_features_csv(const FeatureTable& t, std::ostream& out);

struct DatasetStats {
  std::size_t sequences = 0;
  std::size_t frames = 0;
  std::size_t cells = 0;
  std::size_t ipsc = 0;
  std::size_t dfc = 0;
  std::size_t unlabeled = 0;
  /// DfC / (iPSC + DfC); empty without labeled cells.
  std::optional<double> dfc_fraction() const;
};

DatasetStats dataset_stats(std::span<const SequenceManifest> sequences);
Json stats_to_json(const DatasetStats& s);

/// Manual annotation files (*.jsonl directly inside `dir`), in path order.
/// Detection and forest files next to them are skipped.
std::vector<SequenceManifest> load_dataset_dir(const std::filesystem::path& dir);

}  // namespace ipsc
