#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "deepproposal/geometry.hpp"

namespace dp {

// One convolutional activation map: C channels of H x W cells, channel-major,
// row-major within a channel. `stride` is image pixels per cell at the scale
// this map was computed on.
struct FeatureMap {
  int layer_id = 0;
  int scale_id = 0;
  double stride = 1.0;
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> data;

  float at(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  float& at(int c, int y, int x) {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }

  // Throws data_error on bad dims, size mismatch, non-finite values or stride <= 0.
  void validate() const;
};

// Integer cell rectangle on a feature map, top-left inclusive, bottom-right
// exclusive: cells [x0,x1) x [y0,y1).
struct CellBox {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;

  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  long area() const { return static_cast<long>(width()) * height(); }
};

// Per-channel summed-area tables with a zero first row and column, so the sum
// over any cell rectangle is four lookups. Accumulation is double precision
// regardless of the f32 source to bound cancellation in the corner differences.
class IntegralImage {
 public:
  IntegralImage() = default;
  explicit IntegralImage(const FeatureMap& fm);

  int channels() const { return channels_; }
  int height() const { return height_; }
  int width() const { return width_; }

  // Sum of channel c over r. No bounds checks beyond debug assertions.
  double sum(int c, const CellBox& r) const {
    const std::size_t w1 = static_cast<std::size_t>(width_) + 1;
    const double* p = planes_.data() + static_cast<std::size_t>(c) * (height_ + 1) * w1;
    return p[static_cast<std::size_t>(r.y1) * w1 + r.x1] -
           p[static_cast<std::size_t>(r.y0) * w1 + r.x1] -
           p[static_cast<std::size_t>(r.y1) * w1 + r.x0] +
           p[static_cast<std::size_t>(r.y0) * w1 + r.x0];
  }

  // Per-channel mean over r, written to out (length channels()). O(C), independent
  // of the box area. Throws bounds_error naming the offending corner.
  void avg_pool_into(const CellBox& r, std::span<double> out) const;
  std::vector<double> avg_pool(const CellBox& r) const;

  void check_box(const CellBox& r) const;

 private:
  int channels_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<double> planes_;  // C planes of (H+1) x (W+1)
};

inline IntegralImage build_integral(const FeatureMap& fm) { return IntegralImage(fm); }

// Pooled window descriptor. Values are level-major: the 1x1 mean block first,
// then 2x2 sub-window means row-major, then 4x4; each sub-window contributes
// `channels` consecutive values. Size bias, when present, appends 3 entries.
struct Descriptor {
  std::vector<double> values;
  std::vector<int> levels;  // subset of {0,1,2}, ascending
  bool size_bias = false;
};

// Number of sub-windows contributed by the given pyramid levels (4^level each).
int pyramid_cell_count(std::span<const int> levels);

// Spatial pyramid over r. Level L splits r into a 2^L x 2^L grid; uneven splits
// give the remainder cells to the last sub-window per axis. Throws
// degenerate_error when r cannot host the finest requested level.
Descriptor pyramid_descriptor(const IntegralImage& ii, const CellBox& r,
                              std::span<const int> levels);

// Final window representation: pooled block and (w, h, w*h) size block, each
// l2-normalized separately. An all-zero pooled block is left at zero; w and h
// are the window size in image pixels and must be positive.
Descriptor assemble_features(const Descriptor& pooled, double w, double h);

// Cell rectangle -> image-pixel rectangle (multiply by stride).
BoundingBox grid_to_image(const CellBox& r, double stride);

// Image-pixel rectangle -> covering cell rectangle: floor the near corner,
// ceil the far corner, clamp to the map; the result is never empty. Throws
// degenerate_error when the box lies fully outside the grid.
CellBox image_to_grid(const BoundingBox& b, double stride, int height, int width);

}  // namespace dp
