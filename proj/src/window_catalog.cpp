#include "deepproposal/window_catalog.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "deepproposal/errors.hpp"

namespace dp {

double scale_factor_for(double target_min_side, double width, double height) {
  if (!(width > 0.0 && height > 0.0)) {
    std::ostringstream msg;
    msg << "image dims must be positive, got " << width << "x" << height;
    throw config_error(msg.str());
  }
  return target_min_side / std::min(width, height);
}

std::vector<double> default_selection_alphas() {
  std::vector<double> alphas;
  for (int i = 0; i <= 9; ++i) alphas.push_back(0.50 + 0.05 * i);
  return alphas;
}

std::vector<WindowShape> candidate_pool(int z_max) {
  if (z_max < 1) {
    std::ostringstream msg;
    msg << "z_max must be >= 1, got " << z_max;
    throw config_error(msg.str());
  }
  std::vector<WindowShape> pool;
  pool.reserve(static_cast<std::size_t>(z_max) * z_max);
  for (int w = 1; w <= z_max; ++w)
    for (int h = 1; h <= z_max; ++h) pool.push_back({w, h});
  return pool;
}

namespace {

// Max overlap of a length-`len` segment placed at integer multiples of `step`
// against the segment [g0, g1). The overlap as a function of the placement is
// concave piecewise linear with a flat maximum over [t_lo, t_hi]; an integer
// adjacent to (or inside) that interval attains the integer optimum.
double best_axis_overlap(double g0, double g1, double len, double step) {
  const double a = g0 / step;
  const double b = (g1 - len) / step;
  const double t_lo = std::min(a, b);
  const double t_hi = std::max(a, b);
  const double cand[4] = {std::floor(t_lo), std::ceil(t_lo), std::floor(t_hi),
                          std::ceil(t_hi)};
  double best = 0.0;
  for (double t : cand) {
    const double lo = t * step;
    const double ov = std::min(lo + len, g1) - std::max(lo, g0);
    best = std::max(best, ov);
  }
  return best;
}

}  // namespace

double achievable_iou(const BoundingBox& gt, const WindowShape& shape, double stride,
                      double scale_factor) {
  const BoundingBox g{gt.x0 * scale_factor, gt.y0 * scale_factor,
                      gt.x1 * scale_factor, gt.y1 * scale_factor};
  const double win_w = shape.w * stride;
  const double win_h = shape.h * stride;
  const double ox = best_axis_overlap(g.x0, g.x1, win_w, stride);
  const double oy = best_axis_overlap(g.y0, g.y1, win_h, stride);
  const double inter = ox * oy;
  if (inter <= 0.0) return 0.0;
  const double uni = win_w * win_h + g.area() - inter;
  return inter / uni;
}

double best_achievable_iou(const BoundingBox& gt, double image_width,
                           double image_height, std::span<const WindowShape> shapes,
                           std::span<const double> scales, double stride) {
  double best = 0.0;
  for (double s : scales) {
    const double factor = scale_factor_for(s, image_width, image_height);
    for (const auto& shape : shapes)
      best = std::max(best, achievable_iou(gt, shape, stride, factor));
  }
  return best;
}

namespace {

bool shape_tie_before(const WindowShape& a, const WindowShape& b) {
  const long aa = static_cast<long>(a.w) * a.h;
  const long bb = static_cast<long>(b.w) * b.h;
  if (aa != bb) return aa < bb;
  if (a.w != b.w) return a.w < b.w;
  return a.h < b.h;
}

double recall_sum(std::span<const double> best_iou, std::span<const double> alphas) {
  const double n = static_cast<double>(best_iou.size());
  double total = 0.0;
  for (double alpha : alphas) {
    long count = 0;
    for (double v : best_iou)
      if (v > alpha) ++count;
    total += static_cast<double>(count) / n;
  }
  return total;
}

}  // namespace

WindowCatalog greedy_select(std::span<const WindowShape> candidates,
                            std::span<const GtImage> gt_set,
                            std::span<const double> scales, double stride, int k,
                            std::span<const double> alphas) {
  if (alphas.empty()) throw config_error("greedy_select needs a non-empty alpha set");
  if (k < 1 || static_cast<std::size_t>(k) > candidates.size()) {
    std::ostringstream msg;
    msg << "catalog size " << k << " must be in [1, " << candidates.size() << "]";
    throw config_error(msg.str());
  }
  std::size_t n_gt = 0;
  for (const auto& img : gt_set) n_gt += img.boxes.size();
  if (n_gt == 0) throw config_error("greedy_select needs at least one ground-truth box");

  // best_iou[cand][gt]: best achievable IoU of one shape over all scales.
  std::vector<std::vector<double>> per_candidate(
      candidates.size(), std::vector<double>(n_gt, 0.0));
  for (std::size_t ci = 0; ci < candidates.size(); ++ci) {
    std::size_t gi = 0;
    for (const auto& img : gt_set) {
      for (const auto& gt : img.boxes) {
        double best = 0.0;
        for (double s : scales) {
          const double factor = scale_factor_for(s, img.width, img.height);
          best = std::max(best, achievable_iou(gt, candidates[ci], stride, factor));
        }
        per_candidate[ci][gi++] = best;
      }
    }
  }

  WindowCatalog catalog;
  catalog.k = k;
  catalog.alphas.assign(alphas.begin(), alphas.end());
  catalog.z_max = 0;
  for (const auto& c : candidates) catalog.z_max = std::max({catalog.z_max, c.w, c.h});

  std::vector<double> current(n_gt, 0.0);
  std::vector<bool> taken(candidates.size(), false);
  std::vector<double> merged(n_gt);
  for (int round = 0; round < k; ++round) {
    int best_idx = -1;
    double best_obj = -1.0;
    for (std::size_t ci = 0; ci < candidates.size(); ++ci) {
      if (taken[ci]) continue;
      for (std::size_t gi = 0; gi < n_gt; ++gi)
        merged[gi] = std::max(current[gi], per_candidate[ci][gi]);
      const double obj = recall_sum(merged, alphas);
      if (best_idx < 0 || obj > best_obj ||
          (obj == best_obj && shape_tie_before(candidates[ci],
                                               candidates[static_cast<std::size_t>(best_idx)]))) {
        best_idx = static_cast<int>(ci);
        best_obj = obj;
      }
    }
    taken[static_cast<std::size_t>(best_idx)] = true;
    catalog.shapes.push_back(candidates[static_cast<std::size_t>(best_idx)]);
    for (std::size_t gi = 0; gi < n_gt; ++gi)
      current[gi] = std::max(current[gi], per_candidate[static_cast<std::size_t>(best_idx)][gi]);
  }
  return catalog;
}

double max_recall(const WindowCatalog& catalog, std::span<const GtImage> gt_set,
                  std::span<const double> scales, double stride, double beta) {
  if (catalog.shapes.empty()) throw config_error("max_recall needs a non-empty catalog");
  std::size_t n_gt = 0, covered = 0;
  for (const auto& img : gt_set) {
    for (const auto& gt : img.boxes) {
      ++n_gt;
      const double best = best_achievable_iou(gt, img.width, img.height,
                                              catalog.shapes, scales, stride);
      if (best >= beta) ++covered;
    }
  }
  if (n_gt == 0) return 1.0;
  return static_cast<double>(covered) / static_cast<double>(n_gt);
}

std::vector<CellBox> enumerate_windows(int height, int width,
                                       const WindowCatalog& catalog) {
  std::vector<CellBox> out;
  out.reserve(static_cast<std::size_t>(std::max(0L, enumerate_count(height, width, catalog))));
  for (const auto& shape : catalog.shapes) {
    if (shape.w > width || shape.h > height) continue;
    for (int y = 0; y + shape.h <= height; ++y)
      for (int x = 0; x + shape.w <= width; ++x)
        out.push_back(CellBox{x, y, x + shape.w, y + shape.h});
  }
  return out;
}

long enumerate_count(int height, int width, const WindowCatalog& catalog) {
  long total = 0;
  for (const auto& shape : catalog.shapes) {
    if (shape.w > width || shape.h > height) continue;
    total += static_cast<long>(height - shape.h + 1) * (width - shape.w + 1);
  }
  return total;
}

}  // namespace dp
