#pragma once

#include <vector>

#include "deepproposal/featmap.hpp"
#include "deepproposal/geometry.hpp"

namespace dp {

// Contour-strength plane at a fine layer's resolution, with a summed-area table
// so any rectangle's edge mass is four lookups.
class EdgeMap {
 public:
  EdgeMap() = default;
  EdgeMap(int height, int width, double stride, std::vector<float> magnitudes);

  int height() const { return height_; }
  int width() const { return width_; }
  double stride() const { return stride_; }
  const std::vector<float>& magnitudes() const { return mag_; }
  float magnitude(int y, int x) const {
    return mag_[static_cast<std::size_t>(y) * width_ + x];
  }

  // Edge mass over a cell rectangle.
  double mass(const CellBox& r) const {
    const std::size_t w1 = static_cast<std::size_t>(width_) + 1;
    return integral_[static_cast<std::size_t>(r.y1) * w1 + r.x1] -
           integral_[static_cast<std::size_t>(r.y0) * w1 + r.x1] -
           integral_[static_cast<std::size_t>(r.y1) * w1 + r.x0] +
           integral_[static_cast<std::size_t>(r.y0) * w1 + r.x0];
  }

 private:
  int height_ = 0;
  int width_ = 0;
  double stride_ = 1.0;
  std::vector<float> mag_;
  std::vector<double> integral_;  // (H+1) x (W+1), zero border
};

struct RefineConfig {
  double kappa = 1.5;        // perimeter-penalty exponent
  double inner_margin = 0.1; // border-band width as a fraction of the box side
  int max_iters = 8;
  double initial_step = 0.25;  // fraction of box size
  double min_step_px = 2.0;

  void validate() const;
};

// Gradient-energy contour estimate: per cell, the root of summed squared central
// differences across all channels (forward/backward at borders), max-normalized
// to [0,1]. A constant map yields an all-zero plane.
EdgeMap edge_map_from_features(const FeatureMap& fm);

// Wraps an externally computed single-channel contour plane (same container as a
// feature map with C=1) so file-based edge providers are interchangeable with the
// built-in one.
EdgeMap edge_map_from_plane(const FeatureMap& fm);

// Alignment score of a box (in pixels of the edge map's scale): contour mass in
// the border band of the box minus contour mass strictly inside it, normalized by
// (2(w+h))^kappa with w,h in cells. The band is the outer `inner_margin` fraction
// per side. High when box edges sit on a closed contour; negative when contours
// cross the interior. Throws degenerate_error when the box shrinks below one cell.
double edgebox_score(const EdgeMap& em, const BoundingBox& box,
                     const RefineConfig& cfg);

struct RefineResult {
  BoundingBox box;
  double score = 0.0;
  bool moved = false;
  bool scored = true;  // false when even the input box could not be scored
};

// Greedy coordinate search over {±step on x, y, w, h} (w/h changes keep the box
// center). Only strict score improvements are accepted; the step halves when a
// full pass yields none, and the search stops below cfg.min_step_px or after
// cfg.max_iters passes. The returned score is never below the input's.
RefineResult greedy_refine(const BoundingBox& box, const EdgeMap& em,
                           const RefineConfig& cfg);

}  // namespace dp
