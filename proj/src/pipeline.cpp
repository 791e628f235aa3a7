#include "deepproposal/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "deepproposal/errors.hpp"
#include "deepproposal/random.hpp"

namespace dp {

namespace fs = std::filesystem;
using nlohmann::json;

int resolve_thread_count(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("DEEPPROPOSAL_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return 1;
}

void parallel_for_ordered(std::size_t n, int threads,
                          const std::function<void(std::size_t)>& fn) {
  threads = std::max(1, threads);
  if (threads == 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

namespace {

double layer5_stride(const DatasetManifest& manifest) {
  for (const auto& img : manifest.images) {
    for (const auto& ref : img.fmaps) {
      if (ref.layer_id == 5) return read_fmap(manifest.root / ref.path).stride;
    }
  }
  throw data_error("manifest has no layer-5 feature maps to take the stride from");
}

std::vector<GtImage> load_gt_set(const DatasetManifest& manifest) {
  std::vector<GtImage> gt_set;
  for (const auto& img : manifest.images) {
    GtImage g;
    g.width = img.width;
    g.height = img.height;
    g.boxes = read_gt_boxes(manifest.root / img.gt_path, img.image_id);
    gt_set.push_back(std::move(g));
  }
  return gt_set;
}

}  // namespace

WindowCatalog run_select_windows(const DatasetManifest& manifest,
                                 const SelectWindowsOptions& opts) {
  const std::vector<GtImage> gt_set = load_gt_set(manifest);
  const double stride = opts.stride.value_or(layer5_stride(manifest));
  const std::vector<double> alphas =
      opts.alphas.empty() ? default_selection_alphas() : opts.alphas;
  const std::vector<WindowShape> pool = candidate_pool(opts.z_max);
  return greedy_select(pool, gt_set, opts.scales, stride, opts.k, alphas);
}

namespace {

struct ScaleTrainAccumulator {
  TrainSet stage1;
  TrainSet stage2;
  std::size_t images_without_positives = 0;
};

// Mine one image's windows into the per-scale training sets. Stage-1 features
// come from the flat layer-5 pool, stage-2 features from the layer-3 pyramid
// over the same image-space boxes.
void accumulate_image(const DatasetManifest& manifest, const ImageRecord& img,
                      const WindowCatalog& catalog, const CascadeConfig& cascade_cfg,
                      const TrainConfig& tc, std::size_t image_index,
                      std::vector<ScaleTrainAccumulator>& acc) {
  const std::vector<BoundingBox> gt = read_gt_boxes(manifest.root / img.gt_path,
                                                    img.image_id);
  const FeatureBundle bundle = load_feature_bundle(manifest, img, cascade_cfg, false);
  static constexpr int kFlat[] = {0};
  static constexpr int kPyramid[] = {0, 1};

  for (const auto& sf : bundle.scales) {
    const IntegralImage ii5(sf.layer5);
    const IntegralImage ii3(sf.layer3);
    const std::vector<CellBox> windows =
        enumerate_windows(sf.layer5.height, sf.layer5.width, catalog);
    std::vector<BoundingBox> image_boxes(windows.size());
    for (std::size_t i = 0; i < windows.size(); ++i) {
      const BoundingBox rescaled = grid_to_image(windows[i], sf.layer5.stride);
      BoundingBox b{rescaled.x0 / sf.scale_factor, rescaled.y0 / sf.scale_factor,
                    rescaled.x1 / sf.scale_factor, rescaled.y1 / sf.scale_factor};
      b.x0 = std::clamp(b.x0, 0.0, bundle.original_width);
      b.y0 = std::clamp(b.y0, 0.0, bundle.original_height);
      b.x1 = std::clamp(b.x1, b.x0, bundle.original_width);
      b.y1 = std::clamp(b.y1, b.y0, bundle.original_height);
      image_boxes[i] = b;
    }

    auto& slot = acc[static_cast<std::size_t>(sf.scale_id)];
    for (int stage = 1; stage <= 2; ++stage) {
      const std::uint64_t seed =
          mix_seed(tc.seed, static_cast<std::uint64_t>(sf.scale_id) * 2 +
                                static_cast<std::uint64_t>(stage),
                   image_index);
      const MinedSamples mined = mine_samples(image_boxes, gt, tc, seed);
      if (!gt.empty() && mined.positives.empty()) ++slot.images_without_positives;

      TrainSet& set = stage == 1 ? slot.stage1 : slot.stage2;
      const auto add_window = [&](std::size_t wi, int label) {
        if (stage == 1) {
          const CellBox& cell = windows[wi];
          const Descriptor pooled = pyramid_descriptor(ii5, cell, kFlat);
          const Descriptor d = assemble_features(pooled, cell.width() * sf.layer5.stride,
                                                 cell.height() * sf.layer5.stride);
          set.add(d.values, label);
        } else {
          const BoundingBox rb{image_boxes[wi].x0 * sf.scale_factor,
                               image_boxes[wi].y0 * sf.scale_factor,
                               image_boxes[wi].x1 * sf.scale_factor,
                               image_boxes[wi].y1 * sf.scale_factor};
          try {
            const CellBox cell =
                image_to_grid(rb, sf.layer3.stride, sf.layer3.height, sf.layer3.width);
            const Descriptor pooled = pyramid_descriptor(ii3, cell, kPyramid);
            const Descriptor d = assemble_features(pooled, rb.width(), rb.height());
            set.add(d.values, label);
          } catch (const degenerate_error&) {
            // window too small for the pyramid at layer-3 resolution; skip
          }
        }
      };
      for (std::size_t wi : mined.positives) add_window(wi, 1);
      for (std::size_t wi : mined.negatives) add_window(wi, -1);
    }
  }
}

}  // namespace

ModelBundle run_train(const DatasetManifest& manifest, const WindowCatalog& catalog,
                      const TrainOptions& opts) {
  if (catalog.shapes.empty()) throw config_error("cannot train with an empty catalog");
  CascadeConfig cascade_cfg;
  cascade_cfg.scales = opts.scales;

  std::vector<ScaleTrainAccumulator> acc(opts.scales.size());
  for (std::size_t i = 0; i < manifest.images.size(); ++i)
    accumulate_image(manifest, manifest.images[i], catalog, cascade_cfg, opts.train, i,
                     acc);

  ModelBundle bundle;
  bundle.catalog = catalog;
  bundle.scales = opts.scales;
  for (std::size_t scale_id = 0; scale_id < opts.scales.size(); ++scale_id) {
    for (int stage = 1; stage <= 2; ++stage) {
      TrainSet& set = stage == 1 ? acc[scale_id].stage1 : acc[scale_id].stage2;
      if (set.size() == 0) {
        std::ostringstream msg;
        msg << "no training samples mined for stage " << stage << " scale_id "
            << scale_id;
        throw data_error(msg.str());
      }
      TrainConfig tc = opts.train;
      tc.seed = mix_seed(opts.train.seed, 0x7261696eULL,
                         static_cast<std::uint64_t>(stage), scale_id);
      LinearModel model = train_linear_svm(set, tc);
      model.stage_id = stage;
      model.scale_id = static_cast<int>(scale_id);
      model.pyramid_levels = stage == 1 ? std::vector<int>{0} : std::vector<int>{0, 1};
      bundle.models.push_back(std::move(model));
    }
  }
  return bundle;
}

ProposeSummary run_propose(const DatasetManifest& manifest, const ModelBundle& bundle,
                           const ProposeOptions& opts, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  const int threads = resolve_thread_count(opts.threads);
  const std::size_t n = manifest.images.size();

  struct PerImage {
    std::vector<BoxRecord> records;
    std::size_t stage_counts[3] = {0, 0, 0};
    double stage_seconds[3] = {0.0, 0.0, 0.0};
    std::size_t dropped = 0;
    std::size_t flagged = 0;
  };
  std::vector<PerImage> results(n);

  parallel_for_ordered(n, threads, [&](std::size_t i) {
    const ImageRecord& img = manifest.images[i];
    const FeatureBundle features = load_feature_bundle(
        manifest, img, opts.cascade, opts.cascade.refine_enabled,
        opts.external_edge_dir);
    const CascadeRun run = propose(features, bundle.catalog, bundle.models, opts.cascade);
    const auto& final_set = run.final_proposals();
    const std::size_t limit =
        std::min(final_set.size(), static_cast<std::size_t>(opts.num_proposals));
    PerImage out;
    for (std::size_t k = 0; k < limit; ++k) {
      const Proposal& p = final_set[k];
      out.records.push_back(BoxRecord{img.image_id, p.box, p.score});
    }
    const StageResult* stages[3] = {&run.stage1, &run.stage2, &run.stage3};
    for (int s = 0; s < 3; ++s) {
      out.stage_counts[s] = stages[s]->proposals.size();
      out.stage_seconds[s] = stages[s]->wall_seconds;
    }
    out.dropped = run.stage2.dropped;
    out.flagged = run.stage3.dropped;
    results[i] = std::move(out);
  });

  ProposeSummary summary;
  summary.images = n;
  std::vector<BoxRecord> all;
  for (const auto& r : results) {
    all.insert(all.end(), r.records.begin(), r.records.end());
    summary.total_boxes += r.records.size();
    for (int s = 0; s < 3; ++s) {
      summary.stage_output_counts[s + 1] += r.stage_counts[s];
      summary.stage_wall_seconds[s + 1] += r.stage_seconds[s];
    }
    summary.stage2_dropped += r.dropped;
    summary.stage3_flagged += r.flagged;
  }
  write_boxes_jsonl(all, out_dir / "proposals.jsonl");

  json stages = json::array();
  for (int stage = 1; stage <= 3; ++stage) {
    const double mean_boxes =
        n == 0 ? 0.0 : static_cast<double>(summary.stage_output_counts[stage]) / n;
    const double mean_time = n == 0 ? 0.0 : summary.stage_wall_seconds[stage] / n;
    stages.push_back(json{{"stage", stage},
                          {"total_boxes", summary.stage_output_counts[stage]},
                          {"mean_boxes_per_image", mean_boxes},
                          {"total_seconds", summary.stage_wall_seconds[stage]},
                          {"mean_seconds_per_image", mean_time}});
  }
  const json run_manifest{
      {"images", n},
      {"beta", opts.cascade.beta},
      {"nms_alpha", opts.cascade.nms_alpha},
      {"cross_scale_alpha", opts.cascade.cross_scale_alpha},
      {"scales", opts.cascade.scales},
      {"budgets", json{{"n1", opts.cascade.n1},
                       {"n2", opts.cascade.n2},
                       {"n_desired", opts.cascade.n_desired}}},
      {"num_proposals", opts.num_proposals},
      {"refine_enabled", opts.cascade.refine_enabled},
      {"threads", threads},
      {"stage2_dropped", summary.stage2_dropped},
      {"stage3_flagged", summary.stage3_flagged},
      {"stages", stages}};
  std::ofstream out(out_dir / "run_manifest.json", std::ios::trunc);
  if (!out) throw data_error("cannot write run manifest in " + out_dir.string());
  out << run_manifest.dump(2) << '\n';
  return summary;
}

EvalReport run_evaluate(const DatasetManifest& manifest,
                        const fs::path& proposals_path, const EvalConfig& cfg,
                        const fs::path& out_dir) {
  const std::vector<ImageEvalData> data = load_eval_data(manifest, proposals_path);
  const EvalReport report = build_report(data, cfg);
  write_report(report, out_dir);
  return report;
}

}  // namespace dp
