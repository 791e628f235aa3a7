#include "deepproposal/featmap.hpp"

#include <cmath>
#include <sstream>

#include "deepproposal/errors.hpp"

namespace dp {

void FeatureMap::validate() const {
  if (channels < 1 || height < 1 || width < 1) {
    std::ostringstream msg;
    msg << "feature map dims must be >= 1, got C=" << channels << " H=" << height
        << " W=" << width;
    throw data_error(msg.str());
  }
  if (!(stride > 0.0)) {
    std::ostringstream msg;
    msg << "feature map stride must be positive, got " << stride;
    throw data_error(msg.str());
  }
  const std::size_t expected =
      static_cast<std::size_t>(channels) * height * width;
  if (data.size() != expected) {
    std::ostringstream msg;
    msg << "feature map data length " << data.size() << " does not match C*H*W = "
        << expected;
    throw data_error(msg.str());
  }
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!std::isfinite(data[i])) {
      std::ostringstream msg;
      msg << "feature map contains non-finite value at flat index " << i;
      throw data_error(msg.str());
    }
  }
}

IntegralImage::IntegralImage(const FeatureMap& fm) {
  fm.validate();
  channels_ = fm.channels;
  height_ = fm.height;
  width_ = fm.width;
  const std::size_t w1 = static_cast<std::size_t>(width_) + 1;
  const std::size_t h1 = static_cast<std::size_t>(height_) + 1;
  planes_.assign(static_cast<std::size_t>(channels_) * h1 * w1, 0.0);
  for (int c = 0; c < channels_; ++c) {
    double* plane = planes_.data() + static_cast<std::size_t>(c) * h1 * w1;
    const float* src = fm.data.data() + static_cast<std::size_t>(c) * height_ * width_;
    for (int y = 0; y < height_; ++y) {
      double row = 0.0;
      double* out = plane + static_cast<std::size_t>(y + 1) * w1;
      const double* above = plane + static_cast<std::size_t>(y) * w1;
      for (int x = 0; x < width_; ++x) {
        row += src[static_cast<std::size_t>(y) * width_ + x];
        out[x + 1] = above[x + 1] + row;
      }
    }
  }
}

void IntegralImage::check_box(const CellBox& r) const {
  const auto fail = [&](const char* corner, int vx, int vy) {
    std::ostringstream msg;
    msg << "cell box " << corner << " corner (" << vx << "," << vy
        << ") out of bounds for " << width_ << "x" << height_ << " map";
    throw bounds_error(msg.str());
  };
  if (r.x0 < 0 || r.y0 < 0) fail("top-left", r.x0, r.y0);
  if (r.x1 > width_ || r.y1 > height_) fail("bottom-right", r.x1, r.y1);
  if (r.x0 >= r.x1 || r.y0 >= r.y1) {
    std::ostringstream msg;
    msg << "cell box [" << r.x0 << "," << r.x1 << ")x[" << r.y0 << "," << r.y1
        << ") is empty";
    throw bounds_error(msg.str());
  }
}

void IntegralImage::avg_pool_into(const CellBox& r, std::span<double> out) const {
  check_box(r);
  if (out.size() != static_cast<std::size_t>(channels_)) {
    std::ostringstream msg;
    msg << "avg_pool output span has length " << out.size() << ", expected "
        << channels_;
    throw config_error(msg.str());
  }
  const double inv_area = 1.0 / static_cast<double>(r.area());
  for (int c = 0; c < channels_; ++c) out[c] = sum(c, r) * inv_area;
}

std::vector<double> IntegralImage::avg_pool(const CellBox& r) const {
  std::vector<double> out(static_cast<std::size_t>(channels_));
  avg_pool_into(r, out);
  return out;
}

int pyramid_cell_count(std::span<const int> levels) {
  int cells = 0;
  for (int l : levels) cells += (1 << l) * (1 << l);
  return cells;
}

Descriptor pyramid_descriptor(const IntegralImage& ii, const CellBox& r,
                              std::span<const int> levels) {
  ii.check_box(r);
  if (levels.empty()) throw config_error("pyramid_descriptor needs at least one level");
  int finest = 0;
  for (int l : levels) {
    if (l < 0 || l > 2) {
      std::ostringstream msg;
      msg << "pyramid level " << l << " outside supported range {0,1,2}";
      throw config_error(msg.str());
    }
    finest = std::max(finest, l);
  }
  const int grid = 1 << finest;
  if (r.width() < grid || r.height() < grid) {
    std::ostringstream msg;
    msg << "cell box " << r.width() << "x" << r.height()
        << " too small for pyramid level " << finest << " (needs >= " << grid << "x"
        << grid << ")";
    throw degenerate_error(msg.str());
  }

  Descriptor d;
  d.levels.assign(levels.begin(), levels.end());
  d.values.reserve(static_cast<std::size_t>(pyramid_cell_count(levels)) * ii.channels());
  std::vector<double> pooled(static_cast<std::size_t>(ii.channels()));
  for (int l : levels) {
    const int k = 1 << l;
    const int step_x = r.width() / k;
    const int step_y = r.height() / k;
    for (int gy = 0; gy < k; ++gy) {
      for (int gx = 0; gx < k; ++gx) {
        CellBox sub;
        sub.x0 = r.x0 + gx * step_x;
        sub.y0 = r.y0 + gy * step_y;
        sub.x1 = (gx == k - 1) ? r.x1 : sub.x0 + step_x;
        sub.y1 = (gy == k - 1) ? r.y1 : sub.y0 + step_y;
        ii.avg_pool_into(sub, pooled);
        d.values.insert(d.values.end(), pooled.begin(), pooled.end());
      }
    }
  }
  return d;
}

Descriptor assemble_features(const Descriptor& pooled, double w, double h) {
  if (!(w > 0.0 && h > 0.0)) {
    std::ostringstream msg;
    msg << "window size must be positive, got " << w << "x" << h;
    throw config_error(msg.str());
  }
  Descriptor d;
  d.levels = pooled.levels;
  d.size_bias = true;
  d.values.reserve(pooled.values.size() + 3);

  double sq = 0.0;
  for (double v : pooled.values) sq += v * v;
  const double norm = std::sqrt(sq);
  if (norm > 0.0) {
    for (double v : pooled.values) d.values.push_back(v / norm);
  } else {
    d.values.insert(d.values.end(), pooled.values.size(), 0.0);
  }

  const double wh = w * h;
  const double size_norm = std::sqrt(w * w + h * h + wh * wh);
  d.values.push_back(w / size_norm);
  d.values.push_back(h / size_norm);
  d.values.push_back(wh / size_norm);
  return d;
}

BoundingBox grid_to_image(const CellBox& r, double stride) {
  if (!(stride > 0.0)) {
    std::ostringstream msg;
    msg << "stride must be positive, got " << stride;
    throw config_error(msg.str());
  }
  return BoundingBox{r.x0 * stride, r.y0 * stride, r.x1 * stride, r.y1 * stride};
}

CellBox image_to_grid(const BoundingBox& b, double stride, int height, int width) {
  if (!(stride > 0.0)) {
    std::ostringstream msg;
    msg << "stride must be positive, got " << stride;
    throw config_error(msg.str());
  }
  const int gx0 = static_cast<int>(std::floor(b.x0 / stride));
  const int gy0 = static_cast<int>(std::floor(b.y0 / stride));
  const int gx1 = static_cast<int>(std::ceil(b.x1 / stride));
  const int gy1 = static_cast<int>(std::ceil(b.y1 / stride));
  if (gx1 <= 0 || gy1 <= 0 || gx0 >= width || gy0 >= height) {
    std::ostringstream msg;
    msg << "image box (" << b.x0 << "," << b.y0 << "," << b.x1 << "," << b.y1
        << ") falls outside a " << width << "x" << height << " grid at stride "
        << stride;
    throw degenerate_error(msg.str());
  }
  CellBox r;
  r.x0 = std::clamp(gx0, 0, width - 1);
  r.y0 = std::clamp(gy0, 0, height - 1);
  r.x1 = std::clamp(gx1, r.x0 + 1, width);
  r.y1 = std::clamp(gy1, r.y0 + 1, height);
  return r;
}

}  // namespace dp
