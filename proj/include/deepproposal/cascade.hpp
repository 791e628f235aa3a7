#pragma once

#include <map>
#include <optional>
#include <span>
#include <vector>

#include "deepproposal/featmap.hpp"
#include "deepproposal/geometry.hpp"
#include "deepproposal/refine.hpp"
#include "deepproposal/scorer.hpp"
#include "deepproposal/window_catalog.hpp"

namespace dp {

// Budgets and thresholds for the three-stage coarse-to-fine cascade.
struct CascadeConfig {
  double beta = 0.5;
  std::vector<double> scales{227.0, 300.0, 400.0, 600.0};  // min-side targets
  int n1 = 4000;
  int n2 = 3000;
  int n_desired = 1000;
  double nms_alpha = 0.55;          // per-scale suppression, beta + 0.05
  double cross_scale_alpha = 0.5;   // cross-scale aggregation, beta
  bool refine_enabled = true;
  RefineConfig refine;

  // The two shipped operating points: suppression tuned for recall at the
  // evaluation overlap, alpha = beta + 0.05, cross-scale alpha = beta.
  static CascadeConfig preset(double beta);

  void validate() const;
};

// Feature maps of one image at one scale. Layer 5 drives dense scoring, layer 3
// the re-scoring pyramid, layer 2 (optional when refinement is off) the contour
// refinement. `scale_factor` converts original-image pixels to this scale's.
struct ScaleFeatures {
  int scale_id = 0;
  double scale_factor = 1.0;
  double image_width = 0.0;   // rescaled dims
  double image_height = 0.0;
  FeatureMap layer5;
  FeatureMap layer3;
  std::optional<FeatureMap> layer2;
  std::optional<EdgeMap> external_edges;  // pluggable contour provider
};

struct FeatureBundle {
  double original_width = 0.0;
  double original_height = 0.0;
  std::vector<ScaleFeatures> scales;

  void validate(const CascadeConfig& cfg, bool need_layer2) const;
};

// A cascade proposal in original-image coordinates, with per-stage scores and
// the scale it came from.
struct Proposal {
  BoundingBox box;
  double score = 0.0;         // ranking score of the producing stage
  double stage1_score = 0.0;  // normalized dense-scoring score
  double stage2_score = 0.0;  // normalized re-scoring score (stage >= 2)
  int scale_id = 0;
};

struct StageResult {
  int stage_id = 0;
  std::vector<Proposal> proposals;  // sorted by descending score
  std::map<int, std::size_t> per_scale_counts;
  std::size_t dropped = 0;  // boxes lost to degenerate cell mapping / failed scoring
  double wall_seconds = 0.0;
};

struct CascadeRun {
  StageResult stage1;
  StageResult stage2;
  StageResult stage3;

  const std::vector<Proposal>& final_proposals() const { return stage3.proposals; }
};

const LinearModel* find_model(std::span<const LinearModel> models, int stage_id,
                              int scale_id);

// Dense sliding-window scoring on layer 5: flat pooled descriptor + size bias,
// per-scale [0,1] score normalization, per-scale NMS, then a global cut to the
// top n1 in original-image coordinates.
StageResult stage1_dense(const FeatureBundle& bundle, const WindowCatalog& catalog,
                         std::span<const LinearModel> models,
                         const CascadeConfig& cfg);

// Re-scores stage-1 survivors on layer 3 with a 1x1 + 2x2 pyramid; the final
// score is the product of both stages' normalized scores. Per-scale NMS and a
// cut to n2, then cross-scale NMS and a cut to n_desired.
StageResult stage2_rescore(const StageResult& stage1, const FeatureBundle& bundle,
                           std::span<const LinearModel> models,
                           const CascadeConfig& cfg);

// Greedy contour alignment on layer 2. Keeps cardinality (no selection, no NMS);
// boxes are re-ranked by their refinement score. Failed boxes keep their input
// geometry and rank last.
StageResult stage3_refine(const StageResult& stage2, const FeatureBundle& bundle,
                          const CascadeConfig& cfg);

// Full cascade. With refinement disabled stage 3 is the identity on stage 2.
CascadeRun propose(const FeatureBundle& bundle, const WindowCatalog& catalog,
                   std::span<const LinearModel> models, const CascadeConfig& cfg);

}  // namespace dp
