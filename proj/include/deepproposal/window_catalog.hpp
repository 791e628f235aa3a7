#pragma once

#include <span>
#include <vector>

#include "deepproposal/featmap.hpp"
#include "deepproposal/geometry.hpp"

namespace dp {

// Sliding-window shape in feature cells of the coarsest layer.
struct WindowShape {
  int w = 0;
  int h = 0;

  bool operator==(const WindowShape&) const = default;
};

// The window shapes picked for sliding-window enumeration, in selection order.
struct WindowCatalog {
  std::vector<WindowShape> shapes;
  int z_max = 20;
  int k = 0;
  std::vector<double> alphas;
};

// Ground truth of one image, boxes in original-image pixels.
struct GtImage {
  double width = 0.0;
  double height = 0.0;
  std::vector<BoundingBox> boxes;
};

// Scale factor that resizes an image so its shorter side equals `target_min_side`.
double scale_factor_for(double target_min_side, double width, double height);

// Overlap thresholds the greedy selection objective sums over: 0.50..0.95 step 0.05.
std::vector<double> default_selection_alphas();

// All Z_max^2 shapes, lexicographic in (w, h).
std::vector<WindowShape> candidate_pool(int z_max);

// Best IoU the shape can reach against gt over all integer grid placements at the
// given scale. gt is in original-image pixels; placements live on the `stride`
// grid of the image rescaled by `scale_factor`. Exact: the 1-D overlap maxima are
// evaluated at the few integer offsets adjacent to the continuous optimum.
double achievable_iou(const BoundingBox& gt, const WindowShape& shape, double stride,
                      double scale_factor);

// Best achievable IoU for one gt box over a set of shapes and min-side scale
// targets. stride is feature cells -> rescaled-image pixels.
double best_achievable_iou(const BoundingBox& gt, double image_width,
                           double image_height, std::span<const WindowShape> shapes,
                           std::span<const double> scales, double stride);

// Greedy shape selection: each round adds the candidate maximizing
// sum_alpha recall(best achievable IoU > alpha) over all ground-truth boxes and
// all scales. Ties go to the smaller w*h, then lexicographic (w, h).
WindowCatalog greedy_select(std::span<const WindowShape> candidates,
                            std::span<const GtImage> gt_set,
                            std::span<const double> scales, double stride, int k,
                            std::span<const double> alphas);

// Fraction of ground-truth boxes with achievable IoU >= beta for some
// (shape, scale): the dictionary's recall upper bound.
double max_recall(const WindowCatalog& catalog, std::span<const GtImage> gt_set,
                  std::span<const double> scales, double stride, double beta);

// All unit-stride placements of every catalog shape on an H x W map, shape-major
// then row-major. Shapes that do not fit are skipped.
std::vector<CellBox> enumerate_windows(int height, int width,
                                       const WindowCatalog& catalog);

// Closed-form count of enumerate_windows output.
long enumerate_count(int height, int width, const WindowCatalog& catalog);

}  // namespace dp
