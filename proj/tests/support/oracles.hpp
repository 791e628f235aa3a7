#pragma once

// Reference implementations the tests trust instead of the library: slow,
// obvious, and written against the same contracts from scratch.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "deepproposal/featmap.hpp"
#include "deepproposal/geometry.hpp"
#include "deepproposal/window_catalog.hpp"

namespace oracle {

// Pixel-counting IoU on a fine lattice; exact in the limit, used with integer
// geometry so the counts are exact.
inline double grid_iou(const dp::BoundingBox& a, const dp::BoundingBox& b) {
  const long x0 = static_cast<long>(std::floor(std::min(a.x0, b.x0)));
  const long y0 = static_cast<long>(std::floor(std::min(a.y0, b.y0)));
  const long x1 = static_cast<long>(std::ceil(std::max(a.x1, b.x1)));
  const long y1 = static_cast<long>(std::ceil(std::max(a.y1, b.y1)));
  long inter = 0, uni = 0;
  for (long y = y0; y < y1; ++y) {
    for (long x = x0; x < x1; ++x) {
      const double cx = x + 0.5, cy = y + 0.5;
      const bool in_a = cx > a.x0 && cx < a.x1 && cy > a.y0 && cy < a.y1;
      const bool in_b = cx > b.x0 && cx < b.x1 && cy > b.y0 && cy < b.y1;
      if (in_a && in_b) ++inter;
      if (in_a || in_b) ++uni;
    }
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

// Quadratic greedy NMS: scan in rank order, suppress on overlap against every
// retained box. Rank rule restated independently from the library.
inline std::vector<dp::ScoredBox> quadratic_nms(std::vector<dp::ScoredBox> boxes,
                                                double threshold,
                                                std::size_t keep = SIZE_MAX) {
  std::sort(boxes.begin(), boxes.end(),
            [](const dp::ScoredBox& a, const dp::ScoredBox& b) {
              if (a.score != b.score) return a.score > b.score;
              if (a.box.x0 != b.box.x0) return a.box.x0 < b.box.x0;
              if (a.box.y0 != b.box.y0) return a.box.y0 < b.box.y0;
              return a.box.area() < b.box.area();
            });
  std::vector<dp::ScoredBox> retained;
  for (const auto& cand : boxes) {
    if (retained.size() >= keep) break;
    bool ok = true;
    for (const auto& r : retained) {
      const double ix = std::min(cand.box.x1, r.box.x1) - std::max(cand.box.x0, r.box.x0);
      const double iy = std::min(cand.box.y1, r.box.y1) - std::max(cand.box.y0, r.box.y0);
      const double inter = (ix > 0 && iy > 0) ? ix * iy : 0.0;
      const double v = inter / (cand.box.area() + r.box.area() - inter);
      if (v > threshold) {
        ok = false;
        break;
      }
    }
    if (ok) retained.push_back(cand);
  }
  return retained;
}

// Direct summation mean over a cell rectangle.
inline std::vector<double> brute_force_mean(const dp::FeatureMap& fm,
                                            const dp::CellBox& r) {
  std::vector<double> out(static_cast<std::size_t>(fm.channels), 0.0);
  for (int c = 0; c < fm.channels; ++c) {
    double acc = 0.0;
    for (int y = r.y0; y < r.y1; ++y)
      for (int x = r.x0; x < r.x1; ++x) acc += fm.at(c, y, x);
    out[static_cast<std::size_t>(c)] = acc / static_cast<double>(r.area());
  }
  return out;
}

// Exhaustive placement scan for the best IoU of a shape against a gt box,
// covering every placement that could possibly intersect.
inline double exhaustive_achievable_iou(const dp::BoundingBox& gt,
                                        const dp::WindowShape& shape, double stride,
                                        double scale_factor) {
  const dp::BoundingBox g{gt.x0 * scale_factor, gt.y0 * scale_factor,
                          gt.x1 * scale_factor, gt.y1 * scale_factor};
  const double w = shape.w * stride, h = shape.h * stride;
  const long ix0 = static_cast<long>(std::floor((g.x0 - w) / stride)) - 2;
  const long ix1 = static_cast<long>(std::ceil(g.x1 / stride)) + 2;
  const long iy0 = static_cast<long>(std::floor((g.y0 - h) / stride)) - 2;
  const long iy1 = static_cast<long>(std::ceil(g.y1 / stride)) + 2;
  double best = 0.0;
  for (long iy = iy0; iy <= iy1; ++iy) {
    for (long ix = ix0; ix <= ix1; ++ix) {
      const dp::BoundingBox window{ix * stride, iy * stride, ix * stride + w,
                                   iy * stride + h};
      best = std::max(best, dp::iou(window, g));
    }
  }
  return best;
}

// Brute-force greedy shape selection, recomputing the objective from scratch
// every round (no caching, no marginal-gain shortcuts).
inline std::vector<dp::WindowShape> brute_force_greedy_select(
    const std::vector<dp::WindowShape>& candidates,
    const std::vector<dp::GtImage>& gt_set, const std::vector<double>& scales,
    double stride, int k, const std::vector<double>& alphas) {
  std::vector<dp::WindowShape> selected;
  std::vector<bool> used(candidates.size(), false);
  const auto objective = [&](const std::vector<dp::WindowShape>& shapes) {
    std::vector<double> best;
    for (const auto& img : gt_set) {
      for (const auto& gt : img.boxes) {
        double v = 0.0;
        for (double s : scales) {
          const double f = s / std::min(img.width, img.height);
          for (const auto& shape : shapes)
            v = std::max(v, exhaustive_achievable_iou(gt, shape, stride, f));
        }
        best.push_back(v);
      }
    }
    double total = 0.0;
    for (double alpha : alphas) {
      long count = 0;
      for (double v : best)
        if (v > alpha) ++count;
      total += static_cast<double>(count) / static_cast<double>(best.size());
    }
    return total;
  };
  for (int round = 0; round < k; ++round) {
    int best_idx = -1;
    double best_obj = -1.0;
    for (std::size_t ci = 0; ci < candidates.size(); ++ci) {
      if (used[ci]) continue;
      std::vector<dp::WindowShape> trial = selected;
      trial.push_back(candidates[ci]);
      const double obj = objective(trial);
      bool wins = best_idx < 0 || obj > best_obj;
      if (!wins && obj == best_obj) {
        const auto& a = candidates[ci];
        const auto& b = candidates[static_cast<std::size_t>(best_idx)];
        const long aa = static_cast<long>(a.w) * a.h, bb = static_cast<long>(b.w) * b.h;
        wins = aa < bb || (aa == bb && (a.w < b.w || (a.w == b.w && a.h < b.h)));
      }
      if (wins) {
        best_idx = static_cast<int>(ci);
        best_obj = obj;
      }
    }
    used[static_cast<std::size_t>(best_idx)] = true;
    selected.push_back(candidates[static_cast<std::size_t>(best_idx)]);
  }
  return selected;
}

inline dp::FeatureMap random_feature_map(std::mt19937_64& rng, int channels, int height,
                                         int width, double stride = 16.0) {
  dp::FeatureMap fm;
  fm.layer_id = 5;
  fm.scale_id = 0;
  fm.stride = stride;
  fm.channels = channels;
  fm.height = height;
  fm.width = width;
  fm.data.resize(static_cast<std::size_t>(channels) * height * width);
  for (float& v : fm.data)
    v = static_cast<float>((rng() >> 11) * 0x1.0p-53 * 2.0 - 1.0);
  return fm;
}

inline dp::CellBox random_cell_box(std::mt19937_64& rng, int height, int width) {
  const int x0 = static_cast<int>(rng() % static_cast<std::uint64_t>(width));
  const int y0 = static_cast<int>(rng() % static_cast<std::uint64_t>(height));
  const int x1 = x0 + 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(width - x0));
  const int y1 = y0 + 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(height - y0));
  return dp::CellBox{x0, y0, x1, y1};
}

inline dp::ScoredBox random_scored_box(std::mt19937_64& rng, double extent,
                                       double max_size, double score_quantum = 0.0) {
  const auto uni = [&](double lo, double hi) {
    return lo + (hi - lo) * ((rng() >> 11) * 0x1.0p-53);
  };
  const double w = uni(1.0, max_size);
  const double h = uni(1.0, max_size);
  const double x0 = uni(0.0, extent - w);
  const double y0 = uni(0.0, extent - h);
  double score = uni(0.0, 1.0);
  if (score_quantum > 0.0) score = std::round(score / score_quantum) * score_quantum;
  return dp::ScoredBox{{x0, y0, x0 + w, y0 + h}, score};
}

}  // namespace oracle
