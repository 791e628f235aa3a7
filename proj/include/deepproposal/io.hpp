#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "deepproposal/cascade.hpp"
#include "deepproposal/eval.hpp"
#include "deepproposal/featmap.hpp"
#include "deepproposal/scorer.hpp"
#include "deepproposal/window_catalog.hpp"

namespace dp {

// FMAP container: "FMAP" magic, u32 version=1, u32 layer_id, u32 scale_id,
// f32 stride, u32 C, u32 H, u32 W, then C*H*W little-endian f32 values,
// channel-major, row-major within a channel. Byte order is fixed little-endian
// regardless of host. Round trips are bitwise exact.
FeatureMap read_fmap(const std::filesystem::path& path);
void write_fmap(const FeatureMap& fm, const std::filesystem::path& path);

// One JSON object per line: {"image_id":..., "x0":..., "y0":..., "x1":..., "y1":...}
// with an optional "score". Coordinates are original-image pixels.
struct BoxRecord {
  std::string image_id;
  BoundingBox box;
  std::optional<double> score;
};

std::vector<BoxRecord> read_boxes_jsonl(const std::filesystem::path& path);
void write_boxes_jsonl(std::span<const BoxRecord> records,
                       const std::filesystem::path& path);

WindowCatalog read_catalog(const std::filesystem::path& path);
void write_catalog(const WindowCatalog& catalog, const std::filesystem::path& path);

LinearModel read_model(const std::filesystem::path& path);
void write_model(const LinearModel& model, const std::filesystem::path& path);

// A trained artifact: the window catalog plus one model per (stage, scale),
// stored as a directory with a bundle.json index.
struct ModelBundle {
  WindowCatalog catalog;
  std::vector<double> scales;  // min-side targets, index = scale_id
  std::vector<LinearModel> models;
};

ModelBundle read_model_bundle(const std::filesystem::path& dir);
void write_model_bundle(const ModelBundle& bundle, const std::filesystem::path& dir);

// Dataset manifest: per image, original dims, the gt box file, and one FMAP per
// (layer, scale).
struct FmapRef {
  int layer_id = 0;
  int scale_id = 0;
  double scale = 0.0;  // min-side target
  std::string path;    // relative to the manifest's directory
};

struct ImageRecord {
  std::string image_id;
  double width = 0.0;
  double height = 0.0;
  std::string gt_path;  // relative to the manifest's directory
  std::vector<FmapRef> fmaps;
};

struct DatasetManifest {
  std::filesystem::path root;  // directory of the manifest file
  std::string split;
  std::uint64_t seed = 0;
  std::vector<ImageRecord> images;

  const FmapRef* find_fmap(const ImageRecord& img, int layer_id, int scale_id) const;
};

DatasetManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

// Existence, parseability and stride/dimension consistency of everything the
// manifest references. Throws data_error with the first offending record.
void validate_manifest(const DatasetManifest& manifest);

// Ground truth of one image (no scores required).
std::vector<BoundingBox> read_gt_boxes(const std::filesystem::path& path,
                                       const std::string& image_id);

// Loads the per-scale feature maps of one image for the configured scale set.
FeatureBundle load_feature_bundle(const DatasetManifest& manifest,
                                  const ImageRecord& img, const CascadeConfig& cfg,
                                  bool need_layer2,
                                  const std::filesystem::path& external_edge_dir = {});

// Ranked proposals joined with ground truth for the metric suite.
std::vector<ImageEvalData> load_eval_data(const DatasetManifest& manifest,
                                          const std::filesystem::path& proposals_path);

// Report files: one CSV per curve (x,y columns) plus summary.json.
void write_report(const EvalReport& report, const std::filesystem::path& dir);

}  // namespace dp
