#include "deepproposal/cascade.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

#include "deepproposal/errors.hpp"

namespace dp {

CascadeConfig CascadeConfig::preset(double beta) {
  CascadeConfig cfg;
  cfg.beta = beta;
  cfg.nms_alpha = beta + 0.05;
  cfg.cross_scale_alpha = beta;
  return cfg;
}

void CascadeConfig::validate() const {
  if (!(beta > 0.0 && beta < 1.0)) throw config_error("cascade beta must be in (0,1)");
  if (!(beta < nms_alpha && nms_alpha <= 1.0))
    throw config_error("cascade needs 0 < beta < nms_alpha <= 1");
  if (!(cross_scale_alpha > 0.0 && cross_scale_alpha <= 1.0))
    throw config_error("cross_scale_alpha must be in (0,1]");
  if (!(n_desired <= n2 && n2 <= n1) || n_desired < 1)
    throw config_error("cascade budgets must satisfy 1 <= n_desired <= n2 <= n1");
  if (scales.empty()) throw config_error("cascade needs at least one scale");
  refine.validate();
}

void FeatureBundle::validate(const CascadeConfig& cfg, bool need_layer2) const {
  if (scales.empty()) throw config_error("feature bundle is empty");
  if (!(original_width > 0.0 && original_height > 0.0))
    throw config_error("feature bundle needs positive original image dims");
  for (const auto& sf : scales) {
    if (sf.scale_id < 0 || static_cast<std::size_t>(sf.scale_id) >= cfg.scales.size()) {
      std::ostringstream msg;
      msg << "scale_id " << sf.scale_id << " outside configured scale set of "
          << cfg.scales.size();
      throw config_error(msg.str());
    }
    if (!(sf.scale_factor > 0.0)) throw config_error("scale_factor must be positive");
    sf.layer5.validate();
    sf.layer3.validate();
    const auto check_cover = [&](const FeatureMap& fm, const char* name) {
      const double cov_w = fm.width * fm.stride;
      const double cov_h = fm.height * fm.stride;
      if (cov_w + 1e-6 < sf.image_width || cov_w >= sf.image_width + 2.0 * fm.stride ||
          cov_h + 1e-6 < sf.image_height || cov_h >= sf.image_height + 2.0 * fm.stride) {
        std::ostringstream msg;
        msg << name << " map (" << fm.width << "x" << fm.height << " cells at stride "
            << fm.stride << ") does not cover the " << sf.image_width << "x"
            << sf.image_height << " rescaled image";
        throw config_error(msg.str());
      }
    };
    check_cover(sf.layer5, "layer-5");
    check_cover(sf.layer3, "layer-3");
    if (need_layer2 && !sf.layer2.has_value() && !sf.external_edges.has_value()) {
      std::ostringstream msg;
      msg << "refinement needs a layer-2 map or external edge map for scale_id "
          << sf.scale_id;
      throw config_error(msg.str());
    }
    if (sf.layer2.has_value()) sf.layer2->validate();
  }
}

const LinearModel* find_model(std::span<const LinearModel> models, int stage_id,
                              int scale_id) {
  for (const auto& m : models)
    if (m.stage_id == stage_id && m.scale_id == scale_id) return &m;
  return nullptr;
}

namespace {

bool proposal_order(const Proposal& a, const Proposal& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.box.x0 != b.box.x0) return a.box.x0 < b.box.x0;
  if (a.box.y0 != b.box.y0) return a.box.y0 < b.box.y0;
  return a.box.area() < b.box.area();
}

BoundingBox to_original(const BoundingBox& rescaled, double factor, double orig_w,
                        double orig_h) {
  BoundingBox b{rescaled.x0 / factor, rescaled.y0 / factor, rescaled.x1 / factor,
                rescaled.y1 / factor};
  b.x0 = std::clamp(b.x0, 0.0, orig_w);
  b.y0 = std::clamp(b.y0, 0.0, orig_h);
  b.x1 = std::clamp(b.x1, b.x0, orig_w);
  b.y1 = std::clamp(b.y1, b.y0, orig_h);
  return b;
}

BoundingBox to_rescaled(const BoundingBox& original, double factor) {
  return BoundingBox{original.x0 * factor, original.y0 * factor, original.x1 * factor,
                     original.y1 * factor};
}

const LinearModel& require_model(std::span<const LinearModel> models, int stage_id,
                                 int scale_id, std::size_t expected_dim,
                                 std::span<const int> expected_levels) {
  const LinearModel* m = find_model(models, stage_id, scale_id);
  if (m == nullptr) {
    std::ostringstream msg;
    msg << "no stage-" << stage_id << " model for scale_id " << scale_id;
    throw config_error(msg.str());
  }
  if (m->dim() != expected_dim) {
    std::ostringstream msg;
    msg << "stage-" << stage_id << " model for scale_id " << scale_id << " has dim "
        << m->dim() << ", feature maps imply " << expected_dim;
    throw config_error(msg.str());
  }
  if (!std::equal(m->pyramid_levels.begin(), m->pyramid_levels.end(),
                  expected_levels.begin(), expected_levels.end())) {
    std::ostringstream msg;
    msg << "stage-" << stage_id << " model for scale_id " << scale_id
        << " has unexpected pyramid levels";
    throw config_error(msg.str());
  }
  return *m;
}

// Flat pooled descriptor + size bias, scored without materializing the vector:
// the pooled block enters as dot(w, p)/|p| thanks to the separate normalization,
// and the size block is constant per window shape.
double fused_flat_score(const IntegralImage& ii, const LinearModel& model,
                        const CellBox& r, double size_term) {
  const int c = ii.channels();
  double dot = 0.0, sq = 0.0;
  const double inv_area = 1.0 / static_cast<double>(r.area());
  for (int ch = 0; ch < c; ++ch) {
    const double v = ii.sum(ch, r) * inv_area;
    dot += model.weights[static_cast<std::size_t>(ch)] * v;
    sq += v * v;
  }
  double s = size_term + model.bias;
  if (sq > 0.0) s += dot / std::sqrt(sq);
  return s;
}

struct Clock {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

}  // namespace

StageResult stage1_dense(const FeatureBundle& bundle, const WindowCatalog& catalog,
                         std::span<const LinearModel> models,
                         const CascadeConfig& cfg) {
  cfg.validate();
  bundle.validate(cfg, false);
  if (catalog.shapes.empty()) throw config_error("window catalog is empty");
  const Clock clock;

  StageResult result;
  result.stage_id = 1;
  std::vector<Proposal> merged;

  static constexpr int kFlatLevels[] = {0};
  for (const auto& sf : bundle.scales) {
    const FeatureMap& fm = sf.layer5;
    const auto& model =
        require_model(models, 1, sf.scale_id, static_cast<std::size_t>(fm.channels) + 3,
                      kFlatLevels);
    const IntegralImage ii(fm);

    std::vector<CellBox> windows = enumerate_windows(fm.height, fm.width, catalog);
    std::vector<double> raw(windows.size());
    std::size_t wi = 0;
    for (const auto& shape : catalog.shapes) {
      if (shape.w > fm.width || shape.h > fm.height) continue;
      const double w_px = shape.w * fm.stride;
      const double h_px = shape.h * fm.stride;
      const double size_norm = std::sqrt(w_px * w_px + h_px * h_px + w_px * h_px * w_px * h_px);
      const std::size_t c = static_cast<std::size_t>(fm.channels);
      const double size_term = (model.weights[c] * w_px + model.weights[c + 1] * h_px +
                                model.weights[c + 2] * w_px * h_px) /
                               size_norm;
      const std::size_t count = static_cast<std::size_t>(fm.height - shape.h + 1) *
                                static_cast<std::size_t>(fm.width - shape.w + 1);
      for (std::size_t k = 0; k < count; ++k, ++wi)
        raw[wi] = fused_flat_score(ii, model, windows[wi], size_term);
    }

    const std::vector<double> normalized = normalize_scores(raw);
    std::vector<ScoredBox> scored(windows.size());
    for (std::size_t i = 0; i < windows.size(); ++i) {
      scored[i].box = grid_to_image(windows[i], fm.stride);
      scored[i].score = normalized[i];
    }
    const auto kept =
        nms_keep_indices(scored, cfg.nms_alpha, static_cast<std::size_t>(cfg.n1));

    result.per_scale_counts[sf.scale_id] = kept.size();
    for (std::size_t i : kept) {
      Proposal p;
      p.box = to_original(scored[i].box, sf.scale_factor, bundle.original_width,
                          bundle.original_height);
      p.score = scored[i].score;
      p.stage1_score = scored[i].score;
      p.scale_id = sf.scale_id;
      merged.push_back(p);
    }
  }

  std::sort(merged.begin(), merged.end(), proposal_order);
  if (merged.size() > static_cast<std::size_t>(cfg.n1))
    merged.resize(static_cast<std::size_t>(cfg.n1));
  result.proposals = std::move(merged);
  result.wall_seconds = clock.seconds();
  return result;
}

StageResult stage2_rescore(const StageResult& stage1, const FeatureBundle& bundle,
                           std::span<const LinearModel> models,
                           const CascadeConfig& cfg) {
  cfg.validate();
  bundle.validate(cfg, false);
  const Clock clock;

  StageResult result;
  result.stage_id = 2;
  std::vector<Proposal> merged;

  static constexpr int kPyramidLevels[] = {0, 1};
  for (const auto& sf : bundle.scales) {
    std::vector<const Proposal*> mine;
    for (const auto& p : stage1.proposals)
      if (p.scale_id == sf.scale_id) mine.push_back(&p);
    if (mine.empty()) {
      result.per_scale_counts[sf.scale_id] = 0;
      continue;
    }

    const FeatureMap& fm = sf.layer3;
    const std::size_t dim = static_cast<std::size_t>(pyramid_cell_count(kPyramidLevels)) *
                                static_cast<std::size_t>(fm.channels) +
                            3;
    const auto& model = require_model(models, 2, sf.scale_id, dim, kPyramidLevels);
    const IntegralImage ii(fm);

    std::vector<const Proposal*> alive;
    std::vector<double> raw;
    for (const Proposal* p : mine) {
      const BoundingBox rb = to_rescaled(p->box, sf.scale_factor);
      try {
        const CellBox cell = image_to_grid(rb, fm.stride, fm.height, fm.width);
        const Descriptor desc = assemble_features(
            pyramid_descriptor(ii, cell, kPyramidLevels), rb.width(), rb.height());
        raw.push_back(score(model, desc));
        alive.push_back(p);
      } catch (const degenerate_error&) {
        ++result.dropped;
      }
    }
    if (alive.empty()) {
      result.per_scale_counts[sf.scale_id] = 0;
      continue;
    }

    const std::vector<double> s2 = normalize_scores(raw);
    std::vector<ScoredBox> scored(alive.size());
    std::vector<Proposal> rescored(alive.size());
    for (std::size_t i = 0; i < alive.size(); ++i) {
      Proposal p = *alive[i];
      p.stage2_score = s2[i];
      p.score = p.stage1_score * s2[i];
      rescored[i] = p;
      scored[i] = ScoredBox{p.box, p.score};
    }
    const auto kept =
        nms_keep_indices(scored, cfg.nms_alpha, static_cast<std::size_t>(cfg.n2));
    result.per_scale_counts[sf.scale_id] = kept.size();
    for (std::size_t i : kept) merged.push_back(rescored[i]);
  }

  std::sort(merged.begin(), merged.end(), proposal_order);
  if (merged.size() > static_cast<std::size_t>(cfg.n2))
    merged.resize(static_cast<std::size_t>(cfg.n2));

  // Cross-scale aggregation at the evaluation overlap threshold.
  std::vector<ScoredBox> pooled(merged.size());
  for (std::size_t i = 0; i < merged.size(); ++i)
    pooled[i] = ScoredBox{merged[i].box, merged[i].score};
  const auto kept = nms_keep_indices(pooled, cfg.cross_scale_alpha,
                                     static_cast<std::size_t>(cfg.n_desired));
  std::vector<Proposal> final_set;
  final_set.reserve(kept.size());
  for (std::size_t i : kept) final_set.push_back(merged[i]);

  result.proposals = std::move(final_set);
  result.wall_seconds = clock.seconds();
  return result;
}

StageResult stage3_refine(const StageResult& stage2, const FeatureBundle& bundle,
                          const CascadeConfig& cfg) {
  cfg.validate();
  StageResult result;
  result.stage_id = 3;
  if (!cfg.refine_enabled) {
    result.proposals = stage2.proposals;
    result.per_scale_counts = stage2.per_scale_counts;
    return result;
  }
  bundle.validate(cfg, true);
  const Clock clock;

  std::vector<Proposal> refined;
  refined.reserve(stage2.proposals.size());
  for (const auto& sf : bundle.scales) {
    std::vector<const Proposal*> mine;
    for (const auto& p : stage2.proposals)
      if (p.scale_id == sf.scale_id) mine.push_back(&p);
    if (mine.empty()) continue;

    const EdgeMap em = sf.external_edges.has_value()
                           ? *sf.external_edges
                           : edge_map_from_features(*sf.layer2);
    result.per_scale_counts[sf.scale_id] = mine.size();
    for (const Proposal* p : mine) {
      const BoundingBox rb = to_rescaled(p->box, sf.scale_factor);
      const RefineResult r = greedy_refine(rb, em, cfg.refine);
      Proposal out = *p;
      if (r.scored) {
        const BoundingBox mapped = to_original(r.box, sf.scale_factor,
                                               bundle.original_width,
                                               bundle.original_height);
        if (mapped.valid()) {
          out.box = mapped;
          out.score = r.score;
        } else {
          out.score = -std::numeric_limits<double>::infinity();
          ++result.dropped;  // refined box fell outside the image; keep the input
        }
      } else {
        out.score = -std::numeric_limits<double>::infinity();
        ++result.dropped;  // kept, but flagged: refinement could not score it
      }
      refined.push_back(out);
    }
  }
  std::sort(refined.begin(), refined.end(), proposal_order);
  result.proposals = std::move(refined);
  result.wall_seconds = clock.seconds();
  return result;
}

CascadeRun propose(const FeatureBundle& bundle, const WindowCatalog& catalog,
                   std::span<const LinearModel> models, const CascadeConfig& cfg) {
  cfg.validate();
  bundle.validate(cfg, cfg.refine_enabled);
  CascadeRun run;
  run.stage1 = stage1_dense(bundle, catalog, models, cfg);
  run.stage2 = stage2_rescore(run.stage1, bundle, models, cfg);
  run.stage3 = stage3_refine(run.stage2, bundle, cfg);
  return run;
}

}  // namespace dp
