#include "deepproposal/synth.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "deepproposal/errors.hpp"
#include "deepproposal/random.hpp"

namespace dp {

namespace fs = std::filesystem;

void SynthConfig::validate() const {
  if (images < 1) throw config_error("synth needs at least one image");
  if (!(canvas_width > 0.0 && canvas_height > 0.0))
    throw config_error("synth canvas dims must be positive");
  if (min_objects < 0 || max_objects < min_objects)
    throw config_error("synth object count range is invalid");
  if (!(min_object_size > 0.0 && max_object_size >= min_object_size))
    throw config_error("synth object size range is invalid");
  if (max_object_size > std::min(canvas_width, canvas_height))
    throw config_error("synth objects must fit inside the canvas");
  if (noise_level < 0.0) throw config_error("synth noise level must be >= 0");
  if (scales.empty()) throw config_error("synth needs at least one scale");
  if (layer_ids.size() != layer_strides.size() ||
      layer_ids.size() != layer_channels.size() || layer_ids.empty())
    throw config_error("synth layer ids, strides and channels must align");
  for (double s : layer_strides)
    if (!(s > 0.0)) throw config_error("synth strides must be positive");
  for (int c : layer_channels)
    if (c < 1) throw config_error("synth channel counts must be >= 1");
}

std::vector<double> layer_signature(int layer_id, int channels, double strength) {
  std::vector<double> sig(static_cast<std::size_t>(channels));
  for (int c = 0; c < channels; ++c) {
    const std::uint64_t bits = splitmix64(static_cast<std::uint64_t>(layer_id) * 257 + c);
    sig[static_cast<std::size_t>(c)] = (bits & 1) ? strength : -strength;
  }
  return sig;
}

namespace {

std::string image_name(int index) {
  std::ostringstream name;
  name << "img_" << std::setw(6) << std::setfill('0') << index;
  return name.str();
}

std::vector<BoundingBox> place_objects(const SynthConfig& cfg, std::mt19937_64& rng) {
  const int count = cfg.min_objects +
                    static_cast<int>(uniform_index(
                        rng, static_cast<std::uint64_t>(cfg.max_objects - cfg.min_objects + 1)));
  std::vector<BoundingBox> boxes;
  for (int i = 0; i < count; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
      const double w = uniform_range(rng, cfg.min_object_size, cfg.max_object_size);
      const double h = uniform_range(rng, cfg.min_object_size, cfg.max_object_size);
      const double x0 = uniform_range(rng, 0.0, cfg.canvas_width - w);
      const double y0 = uniform_range(rng, 0.0, cfg.canvas_height - h);
      const BoundingBox candidate{x0, y0, x0 + w, y0 + h};
      bool ok = true;
      for (const auto& other : boxes)
        if (iou(candidate, other) > 0.3) ok = false;
      if (ok) {
        boxes.push_back(candidate);
        placed = true;
      }
    }
    if (!placed) {
      std::ostringstream msg;
      msg << "could not place object " << i + 1 << " of " << count
          << " after bounded retries";
      throw data_error(msg.str());
    }
  }
  return boxes;
}

FeatureMap render_map(const SynthConfig& cfg, std::span<const BoundingBox> objects,
                      int layer_id, double stride, int channels, int scale_id,
                      double factor, double scaled_w, double scaled_h,
                      std::uint64_t map_seed) {
  FeatureMap fm;
  fm.layer_id = layer_id;
  fm.scale_id = scale_id;
  fm.stride = stride;
  fm.channels = channels;
  fm.width = static_cast<int>(std::ceil(scaled_w / stride));
  fm.height = static_cast<int>(std::ceil(scaled_h / stride));
  fm.data.assign(static_cast<std::size_t>(channels) * fm.height * fm.width, 0.0f);

  std::mt19937_64 rng(map_seed);
  NormalSampler normal;
  for (float& v : fm.data)
    v = static_cast<float>(cfg.background_level + cfg.noise_level * normal(rng));

  const std::vector<double> sig =
      layer_signature(layer_id, channels, cfg.signature_strength);
  const double cell_area = stride * stride;
  for (const auto& obj : objects) {
    const BoundingBox scaled{obj.x0 * factor, obj.y0 * factor, obj.x1 * factor,
                             obj.y1 * factor};
    const int cx0 = std::max(0, static_cast<int>(std::floor(scaled.x0 / stride)));
    const int cy0 = std::max(0, static_cast<int>(std::floor(scaled.y0 / stride)));
    const int cx1 = std::min(fm.width, static_cast<int>(std::ceil(scaled.x1 / stride)));
    const int cy1 = std::min(fm.height, static_cast<int>(std::ceil(scaled.y1 / stride)));
    for (int y = cy0; y < cy1; ++y) {
      for (int x = cx0; x < cx1; ++x) {
        const BoundingBox cell{x * stride, y * stride, (x + 1) * stride,
                               (y + 1) * stride};
        const double coverage = intersection_area(scaled, cell) / cell_area;
        if (coverage <= 0.0) continue;
        for (int c = 0; c < channels; ++c)
          fm.at(c, y, x) += static_cast<float>(coverage * sig[static_cast<std::size_t>(c)]);
      }
    }
  }
  return fm;
}

}  // namespace

DatasetManifest generate_synthetic(const SynthConfig& cfg, const fs::path& out_dir) {
  cfg.validate();
  fs::create_directories(out_dir / "fmaps");
  fs::create_directories(out_dir / "gt");

  const std::uint64_t split_tag =
      cfg.split == "train" ? 1 : (cfg.split == "test" ? 2 : 3);

  DatasetManifest manifest;
  manifest.root = fs::absolute(out_dir);
  manifest.split = cfg.split;
  manifest.seed = cfg.seed;

  for (int i = 0; i < cfg.images; ++i) {
    const std::string id = image_name(i);
    ImageRecord rec;
    rec.image_id = id;
    rec.width = cfg.canvas_width;
    rec.height = cfg.canvas_height;

    std::mt19937_64 place_rng(mix_seed(cfg.seed, split_tag, static_cast<std::uint64_t>(i)));
    const std::vector<BoundingBox> objects = place_objects(cfg, place_rng);

    rec.gt_path = "gt/" + id + ".jsonl";
    std::vector<BoxRecord> gt_records;
    for (const auto& b : objects) gt_records.push_back(BoxRecord{id, b, std::nullopt});
    write_boxes_jsonl(gt_records, out_dir / rec.gt_path);

    for (std::size_t scale_id = 0; scale_id < cfg.scales.size(); ++scale_id) {
      const double factor =
          scale_factor_for(cfg.scales[scale_id], cfg.canvas_width, cfg.canvas_height);
      const double scaled_w = std::round(cfg.canvas_width * factor);
      const double scaled_h = std::round(cfg.canvas_height * factor);
      for (std::size_t li = 0; li < cfg.layer_ids.size(); ++li) {
        const std::uint64_t map_seed =
            mix_seed(cfg.seed, split_tag * 1000 + static_cast<std::uint64_t>(i),
                     scale_id * 16 + li, 0xfeedULL);
        const FeatureMap fm = render_map(
            cfg, objects, cfg.layer_ids[li], cfg.layer_strides[li],
            cfg.layer_channels[li], static_cast<int>(scale_id), factor, scaled_w,
            scaled_h, map_seed);
        std::ostringstream name;
        name << "fmaps/" << id << "_l" << cfg.layer_ids[li] << "_s" << scale_id
             << ".fmap";
        write_fmap(fm, out_dir / name.str());
        FmapRef ref;
        ref.layer_id = cfg.layer_ids[li];
        ref.scale_id = static_cast<int>(scale_id);
        ref.scale = cfg.scales[scale_id];
        ref.path = name.str();
        rec.fmaps.push_back(std::move(ref));
      }
    }
    manifest.images.push_back(std::move(rec));
  }
  write_manifest(manifest, out_dir / "manifest.json");
  return manifest;
}

}  // namespace dp
