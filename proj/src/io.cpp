#include "deepproposal/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "deepproposal/errors.hpp"

namespace dp {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'F', 'M', 'A', 'P'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint64_t kMaxElements = 1ULL << 31;

static_assert(std::endian::native == std::endian::little ||
                  std::endian::native == std::endian::big,
              "mixed-endian hosts are not supported");

std::uint32_t bswap32(std::uint32_t v) {
  return ((v & 0x000000ffu) << 24) | ((v & 0x0000ff00u) << 8) |
         ((v & 0x00ff0000u) >> 8) | ((v & 0xff000000u) >> 24);
}

std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) return bswap32(v);
  return v;
}

void write_u32(std::ostream& out, std::uint32_t v) {
  const std::uint32_t le = to_le(v);
  out.write(reinterpret_cast<const char*>(&le), 4);
}

std::uint32_t read_u32(std::istream& in, const fs::path& path, const char* field) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 4);
  if (!in) {
    std::ostringstream msg;
    msg << path.string() << ": truncated while reading " << field;
    throw data_error(msg.str());
  }
  return to_le(v);
}

void write_f32(std::ostream& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  write_u32(out, bits);
}

float read_f32(std::istream& in, const fs::path& path, const char* field) {
  const std::uint32_t bits = read_u32(in, path, field);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

}  // namespace

FeatureMap read_fmap(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open fmap file " + path.string());

  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw data_error(path.string() + ": bad magic, not an FMAP file");
  const std::uint32_t version = read_u32(in, path, "version");
  if (version != kVersion) {
    std::ostringstream msg;
    msg << path.string() << ": unsupported fmap version " << version << " (expected "
        << kVersion << ")";
    throw data_error(msg.str());
  }

  FeatureMap fm;
  fm.layer_id = static_cast<int>(read_u32(in, path, "layer_id"));
  fm.scale_id = static_cast<int>(read_u32(in, path, "scale_id"));
  fm.stride = read_f32(in, path, "stride");
  const std::uint64_t c = read_u32(in, path, "channels");
  const std::uint64_t h = read_u32(in, path, "height");
  const std::uint64_t w = read_u32(in, path, "width");
  const std::uint64_t n = c * h * w;
  if (c == 0 || h == 0 || w == 0 || n > kMaxElements) {
    std::ostringstream msg;
    msg << path.string() << ": dims " << c << "x" << h << "x" << w
        << " are zero or overflow the element limit";
    throw data_error(msg.str());
  }
  fm.channels = static_cast<int>(c);
  fm.height = static_cast<int>(h);
  fm.width = static_cast<int>(w);

  fm.data.resize(static_cast<std::size_t>(n));
  in.read(reinterpret_cast<char*>(fm.data.data()),
          static_cast<std::streamsize>(n * 4));
  if (static_cast<std::uint64_t>(in.gcount()) != n * 4) {
    std::ostringstream msg;
    msg << path.string() << ": truncated payload, expected " << n * 4 << " bytes, got "
        << in.gcount();
    throw data_error(msg.str());
  }
  if constexpr (std::endian::native == std::endian::big) {
    for (float& v : fm.data) {
      std::uint32_t bits;
      std::memcpy(&bits, &v, 4);
      bits = bswap32(bits);
      std::memcpy(&v, &bits, 4);
    }
  }
  fm.validate();
  return fm;
}

void write_fmap(const FeatureMap& fm, const fs::path& path) {
  fm.validate();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw data_error("cannot open fmap file for writing: " + path.string());
  out.write(kMagic, 4);
  write_u32(out, kVersion);
  write_u32(out, static_cast<std::uint32_t>(fm.layer_id));
  write_u32(out, static_cast<std::uint32_t>(fm.scale_id));
  write_f32(out, static_cast<float>(fm.stride));
  write_u32(out, static_cast<std::uint32_t>(fm.channels));
  write_u32(out, static_cast<std::uint32_t>(fm.height));
  write_u32(out, static_cast<std::uint32_t>(fm.width));
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(fm.data.data()),
              static_cast<std::streamsize>(fm.data.size() * 4));
  } else {
    for (float v : fm.data) write_f32(out, v);
  }
  if (!out) throw data_error("short write to " + path.string());
}

std::vector<BoxRecord> read_boxes_jsonl(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open box file " + path.string());
  std::vector<BoxRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      std::ostringstream msg;
      msg << path.string() << ":" << line_no << ": bad JSON: " << e.what();
      throw data_error(msg.str());
    }
    BoxRecord r;
    try {
      r.image_id = j.at("image_id").get<std::string>();
      r.box.x0 = j.at("x0").get<double>();
      r.box.y0 = j.at("y0").get<double>();
      r.box.x1 = j.at("x1").get<double>();
      r.box.y1 = j.at("y1").get<double>();
      if (j.contains("score")) r.score = j.at("score").get<double>();
    } catch (const json::exception& e) {
      std::ostringstream msg;
      msg << path.string() << ":" << line_no << ": missing box field: " << e.what();
      throw data_error(msg.str());
    }
    if (!r.box.valid()) {
      std::ostringstream msg;
      msg << path.string() << ":" << line_no << ": box has non-positive extent";
      throw data_error(msg.str());
    }
    records.push_back(std::move(r));
  }
  return records;
}

void write_boxes_jsonl(std::span<const BoxRecord> records, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw data_error("cannot open box file for writing: " + path.string());
  for (const auto& r : records) {
    json j{{"image_id", r.image_id},
           {"x0", r.box.x0},
           {"y0", r.box.y0},
           {"x1", r.box.x1},
           {"y1", r.box.y1}};
    if (r.score.has_value()) j["score"] = *r.score;
    out << j.dump() << '\n';
  }
  if (!out) throw data_error("short write to " + path.string());
}

WindowCatalog read_catalog(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open catalog file " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw data_error(path.string() + ": bad catalog JSON: " + e.what());
  }
  WindowCatalog catalog;
  try {
    catalog.z_max = j.at("z_max").get<int>();
    catalog.k = j.at("k").get<int>();
    catalog.alphas = j.at("alphas").get<std::vector<double>>();
    for (const auto& s : j.at("shapes")) {
      if (!s.is_array() || s.size() != 2)
        throw data_error(path.string() + ": catalog shape entries must be [w,h] pairs");
      catalog.shapes.push_back({s[0].get<int>(), s[1].get<int>()});
    }
  } catch (const json::exception& e) {
    throw data_error(path.string() + ": missing catalog field: " + e.what());
  }
  return catalog;
}

void write_catalog(const WindowCatalog& catalog, const fs::path& path) {
  json shapes = json::array();
  for (const auto& s : catalog.shapes) shapes.push_back({s.w, s.h});
  const json j{{"z_max", catalog.z_max},
               {"k", catalog.k},
               {"alphas", catalog.alphas},
               {"shapes", shapes}};
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw data_error("cannot open catalog file for writing: " + path.string());
  out << j.dump(2) << '\n';
}

LinearModel read_model(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open model file " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw data_error(path.string() + ": bad model JSON: " + e.what());
  }
  LinearModel m;
  try {
    m.stage_id = j.at("stage_id").get<int>();
    m.scale_id = j.at("scale_id").get<int>();
    m.pyramid_levels = j.at("pyramid_levels").get<std::vector<int>>();
    m.bias = j.at("bias").get<double>();
    m.weights = j.at("weights").get<std::vector<double>>();
    const auto dim = j.at("dim").get<std::size_t>();
    if (dim != m.weights.size()) {
      std::ostringstream msg;
      msg << path.string() << ": dim field " << dim << " does not match "
          << m.weights.size() << " weights";
      throw data_error(msg.str());
    }
  } catch (const json::exception& e) {
    throw data_error(path.string() + ": missing model field: " + e.what());
  }
  for (double w : m.weights)
    if (!std::isfinite(w))
      throw data_error(path.string() + ": model has non-finite weights");
  if (!std::isfinite(m.bias))
    throw data_error(path.string() + ": model has non-finite bias");
  return m;
}

void write_model(const LinearModel& model, const fs::path& path) {
  const json j{{"stage_id", model.stage_id},
               {"scale_id", model.scale_id},
               {"pyramid_levels", model.pyramid_levels},
               {"dim", model.weights.size()},
               {"bias", model.bias},
               {"weights", model.weights}};
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw data_error("cannot open model file for writing: " + path.string());
  out << j.dump(2) << '\n';
}

ModelBundle read_model_bundle(const fs::path& dir) {
  const fs::path index_path = dir / "bundle.json";
  std::ifstream in(index_path);
  if (!in) throw data_error("cannot open bundle index " + index_path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw data_error(index_path.string() + ": bad bundle JSON: " + e.what());
  }
  ModelBundle bundle;
  try {
    bundle.scales = j.at("scales").get<std::vector<double>>();
    bundle.catalog = read_catalog(dir / j.at("catalog").get<std::string>());
    for (const auto& rel : j.at("models"))
      bundle.models.push_back(read_model(dir / rel.get<std::string>()));
  } catch (const json::exception& e) {
    throw data_error(index_path.string() + ": missing bundle field: " + e.what());
  }
  return bundle;
}

void write_model_bundle(const ModelBundle& bundle, const fs::path& dir) {
  fs::create_directories(dir);
  write_catalog(bundle.catalog, dir / "catalog.json");
  std::vector<std::string> model_files;
  for (const auto& m : bundle.models) {
    std::ostringstream name;
    name << "model_stage" << m.stage_id << "_scale" << m.scale_id << ".json";
    write_model(m, dir / name.str());
    model_files.push_back(name.str());
  }
  const json j{{"scales", bundle.scales}, {"catalog", "catalog.json"}, {"models", model_files}};
  std::ofstream out(dir / "bundle.json", std::ios::trunc);
  if (!out) throw data_error("cannot write bundle index in " + dir.string());
  out << j.dump(2) << '\n';
}

const FmapRef* DatasetManifest::find_fmap(const ImageRecord& img, int layer_id,
                                          int scale_id) const {
  for (const auto& ref : img.fmaps)
    if (ref.layer_id == layer_id && ref.scale_id == scale_id) return &ref;
  return nullptr;
}

DatasetManifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open manifest " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw data_error(path.string() + ": bad manifest JSON: " + e.what());
  }
  DatasetManifest m;
  m.root = fs::absolute(path).parent_path();
  try {
    m.split = j.at("split").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& ji : j.at("images")) {
      ImageRecord rec;
      rec.image_id = ji.at("image_id").get<std::string>();
      rec.width = ji.at("width").get<double>();
      rec.height = ji.at("height").get<double>();
      rec.gt_path = ji.at("gt").get<std::string>();
      for (const auto& jf : ji.at("fmaps")) {
        FmapRef ref;
        ref.layer_id = jf.at("layer").get<int>();
        ref.scale_id = jf.at("scale_id").get<int>();
        ref.scale = jf.at("scale").get<double>();
        ref.path = jf.at("path").get<std::string>();
        rec.fmaps.push_back(std::move(ref));
      }
      m.images.push_back(std::move(rec));
    }
  } catch (const json::exception& e) {
    throw data_error(path.string() + ": missing manifest field: " + e.what());
  }
  return m;
}

void write_manifest(const DatasetManifest& manifest, const fs::path& path) {
  json images = json::array();
  for (const auto& rec : manifest.images) {
    json fmaps = json::array();
    for (const auto& ref : rec.fmaps) {
      fmaps.push_back(json{{"layer", ref.layer_id},
                           {"scale_id", ref.scale_id},
                           {"scale", ref.scale},
                           {"path", ref.path}});
    }
    images.push_back(json{{"image_id", rec.image_id},
                          {"width", rec.width},
                          {"height", rec.height},
                          {"gt", rec.gt_path},
                          {"fmaps", fmaps}});
  }
  const json j{{"split", manifest.split}, {"seed", manifest.seed}, {"images", images}};
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw data_error("cannot write manifest " + path.string());
  out << j.dump(2) << '\n';
}

void validate_manifest(const DatasetManifest& manifest) {
  for (const auto& rec : manifest.images) {
    if (!(rec.width > 0.0 && rec.height > 0.0)) {
      throw data_error("manifest image '" + rec.image_id + "' has non-positive dims");
    }
    const fs::path gt = manifest.root / rec.gt_path;
    if (!fs::exists(gt))
      throw data_error("manifest image '" + rec.image_id + "' gt file missing: " +
                       gt.string());
    read_gt_boxes(gt, rec.image_id);
    for (const auto& ref : rec.fmaps) {
      const fs::path p = manifest.root / ref.path;
      if (!fs::exists(p))
        throw data_error("manifest image '" + rec.image_id + "' fmap missing: " +
                         p.string());
      const FeatureMap fm = read_fmap(p);
      const double factor = scale_factor_for(ref.scale, rec.width, rec.height);
      const double scaled_w = std::round(rec.width * factor);
      const double scaled_h = std::round(rec.height * factor);
      const auto expect = [&](double px) {
        return static_cast<int>(std::ceil(px / fm.stride));
      };
      if (fm.layer_id != ref.layer_id || fm.scale_id != ref.scale_id ||
          std::abs(fm.width - expect(scaled_w)) > 1 ||
          std::abs(fm.height - expect(scaled_h)) > 1) {
        std::ostringstream msg;
        msg << "manifest image '" << rec.image_id << "' fmap " << ref.path
            << " is inconsistent: header layer " << fm.layer_id << " scale_id "
            << fm.scale_id << " dims " << fm.width << "x" << fm.height
            << " vs expected layer " << ref.layer_id << " scale_id " << ref.scale_id
            << " dims ~" << expect(scaled_w) << "x" << expect(scaled_h)
            << " at stride " << fm.stride;
        throw data_error(msg.str());
      }
    }
  }
}

std::vector<BoundingBox> read_gt_boxes(const fs::path& path, const std::string& image_id) {
  std::vector<BoundingBox> out;
  for (const auto& rec : read_boxes_jsonl(path)) {
    if (!rec.image_id.empty() && rec.image_id != image_id) {
      std::ostringstream msg;
      msg << path.string() << ": gt record for '" << rec.image_id
          << "' in the file of image '" << image_id << "'";
      throw data_error(msg.str());
    }
    out.push_back(rec.box);
  }
  return out;
}

FeatureBundle load_feature_bundle(const DatasetManifest& manifest,
                                  const ImageRecord& img, const CascadeConfig& cfg,
                                  bool need_layer2,
                                  const std::filesystem::path& external_edge_dir) {
  FeatureBundle bundle;
  bundle.original_width = img.width;
  bundle.original_height = img.height;
  for (std::size_t scale_id = 0; scale_id < cfg.scales.size(); ++scale_id) {
    ScaleFeatures sf;
    sf.scale_id = static_cast<int>(scale_id);
    sf.scale_factor = scale_factor_for(cfg.scales[scale_id], img.width, img.height);
    sf.image_width = std::round(img.width * sf.scale_factor);
    sf.image_height = std::round(img.height * sf.scale_factor);

    const auto load = [&](int layer_id) {
      const FmapRef* ref = manifest.find_fmap(img, layer_id, sf.scale_id);
      if (ref == nullptr) {
        std::ostringstream msg;
        msg << "image '" << img.image_id << "' has no layer-" << layer_id
            << " fmap for scale_id " << scale_id;
        throw data_error(msg.str());
      }
      return read_fmap(manifest.root / ref->path);
    };
    sf.layer5 = load(5);
    sf.layer3 = load(3);
    if (need_layer2) {
      if (!external_edge_dir.empty()) {
        std::ostringstream name;
        name << img.image_id << "_s" << scale_id << ".fmap";
        sf.external_edges = edge_map_from_plane(read_fmap(external_edge_dir / name.str()));
      } else {
        sf.layer2 = load(2);
      }
    }
    bundle.scales.push_back(std::move(sf));
  }
  return bundle;
}

std::vector<ImageEvalData> load_eval_data(const DatasetManifest& manifest,
                                          const fs::path& proposals_path) {
  std::map<std::string, std::vector<ScoredBox>> by_image;
  for (const auto& rec : read_boxes_jsonl(proposals_path)) {
    if (!rec.score.has_value()) {
      std::ostringstream msg;
      msg << proposals_path.string() << ": proposal for image '" << rec.image_id
          << "' has no score; ranked (scored) proposals are required";
      throw data_error(msg.str());
    }
    by_image[rec.image_id].push_back(ScoredBox{rec.box, *rec.score});
  }
  std::vector<ImageEvalData> data;
  for (const auto& img : manifest.images) {
    ImageEvalData d;
    d.image_id = img.image_id;
    d.groundtruth = read_gt_boxes(manifest.root / img.gt_path, img.image_id);
    if (auto it = by_image.find(img.image_id); it != by_image.end()) {
      d.proposals = std::move(it->second);
      std::stable_sort(d.proposals.begin(), d.proposals.end(), score_order);
    }
    data.push_back(std::move(d));
  }
  return data;
}

namespace {

void write_curve_csv(const Curve& curve, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw data_error("cannot write curve file " + path.string());
  out << "x,y\n";
  out.precision(12);
  for (std::size_t i = 0; i < curve.x.size(); ++i)
    out << curve.x[i] << ',' << curve.y[i] << '\n';
}

}  // namespace

void write_report(const EvalReport& report, const fs::path& dir) {
  fs::create_directories(dir);
  write_curve_csv(report.recall_vs_n, dir / "recall_vs_n.csv");
  write_curve_csv(report.recall_vs_iou, dir / "recall_vs_iou.csv");
  write_curve_csv(report.average_recall_vs_n, dir / "average_recall.csv");

  json n_at = json::object();
  for (const auto& [target, n] : report.n_at) {
    std::ostringstream key;
    key << static_cast<int>(std::lround(target * 100)) << "%";
    if (n.has_value())
      n_at[key.str()] = *n;
    else
      n_at[key.str()] = "-";
  }
  const json j{{"auc", report.auc},
               {"n_at", n_at},
               {"ar_at", json{{"100", report.ar_at_100}, {"1000", report.ar_at_1000}}},
               {"beta", report.config.beta},
               {"budget", report.config.budget},
               {"max_boxes", report.config.max_boxes},
               {"total_groundtruth", report.total_groundtruth},
               {"total_images", report.total_images}};
  std::ofstream out(dir / "summary.json", std::ios::trunc);
  if (!out) throw data_error("cannot write summary in " + dir.string());
  out << j.dump(2) << '\n';
}

}  // namespace dp
