#include "deepproposal/refine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "deepproposal/errors.hpp"

namespace dp {

void RefineConfig::validate() const {
  if (!(kappa > 0.0)) throw config_error("refine kappa must be positive");
  if (!(inner_margin > 0.0 && inner_margin < 0.5))
    throw config_error("refine inner_margin must be in (0, 0.5)");
  if (max_iters < 1) throw config_error("refine max_iters must be >= 1");
  if (!(initial_step > 0.0)) throw config_error("refine initial_step must be positive");
  if (!(min_step_px > 0.0)) throw config_error("refine min_step_px must be positive");
}

EdgeMap::EdgeMap(int height, int width, double stride, std::vector<float> magnitudes)
    : height_(height), width_(width), stride_(stride), mag_(std::move(magnitudes)) {
  if (height_ < 1 || width_ < 1 || !(stride_ > 0.0))
    throw data_error("edge map needs positive dims and stride");
  if (mag_.size() != static_cast<std::size_t>(height_) * width_)
    throw data_error("edge map magnitude plane does not match dims");
  for (float v : mag_) {
    if (!(v >= 0.0f) || !std::isfinite(v))
      throw data_error("edge map magnitudes must be finite and non-negative");
  }
  const std::size_t w1 = static_cast<std::size_t>(width_) + 1;
  integral_.assign((static_cast<std::size_t>(height_) + 1) * w1, 0.0);
  for (int y = 0; y < height_; ++y) {
    double row = 0.0;
    for (int x = 0; x < width_; ++x) {
      row += mag_[static_cast<std::size_t>(y) * width_ + x];
      integral_[static_cast<std::size_t>(y + 1) * w1 + x + 1] =
          integral_[static_cast<std::size_t>(y) * w1 + x + 1] + row;
    }
  }
}

EdgeMap edge_map_from_features(const FeatureMap& fm) {
  fm.validate();
  const int h = fm.height, w = fm.width;
  std::vector<float> mag(static_cast<std::size_t>(h) * w, 0.0f);
  float peak = 0.0f;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double energy = 0.0;
      for (int c = 0; c < fm.channels; ++c) {
        const int xl = std::max(0, x - 1), xr = std::min(w - 1, x + 1);
        const int yu = std::max(0, y - 1), yd = std::min(h - 1, y + 1);
        const double dx = (fm.at(c, y, xr) - fm.at(c, y, xl)) / (xr - xl == 0 ? 1.0 : xr - xl);
        const double dy = (fm.at(c, yd, x) - fm.at(c, yu, x)) / (yd - yu == 0 ? 1.0 : yd - yu);
        energy += dx * dx + dy * dy;
      }
      const float m = static_cast<float>(std::sqrt(energy));
      mag[static_cast<std::size_t>(y) * w + x] = m;
      peak = std::max(peak, m);
    }
  }
  if (peak > 0.0f) {
    for (float& m : mag) m /= peak;
  }
  return EdgeMap(h, w, fm.stride, std::move(mag));
}

EdgeMap edge_map_from_plane(const FeatureMap& fm) {
  fm.validate();
  if (fm.channels != 1) {
    std::ostringstream msg;
    msg << "external edge plane must have exactly 1 channel, got " << fm.channels;
    throw data_error(msg.str());
  }
  for (float v : fm.data)
    if (v < 0.0f) throw data_error("external edge plane has negative magnitudes");
  return EdgeMap(fm.height, fm.width, fm.stride, fm.data);
}

namespace {

// Round a pixel-space box to whole cells, clamped to the map, never empty.
CellBox snap_to_cells(const EdgeMap& em, const BoundingBox& box) {
  const double s = em.stride();
  if (box.x1 <= 0.0 || box.y1 <= 0.0 || box.x0 >= em.width() * s ||
      box.y0 >= em.height() * s) {
    std::ostringstream msg;
    msg << "box (" << box.x0 << "," << box.y0 << "," << box.x1 << "," << box.y1
        << ") does not intersect the edge map";
    throw degenerate_error(msg.str());
  }
  CellBox r;
  r.x0 = std::clamp(static_cast<int>(std::lround(box.x0 / s)), 0, em.width() - 1);
  r.y0 = std::clamp(static_cast<int>(std::lround(box.y0 / s)), 0, em.height() - 1);
  r.x1 = std::clamp(static_cast<int>(std::lround(box.x1 / s)), r.x0 + 1, em.width());
  r.y1 = std::clamp(static_cast<int>(std::lround(box.y1 / s)), r.y0 + 1, em.height());
  return r;
}

}  // namespace

double edgebox_score(const EdgeMap& em, const BoundingBox& box,
                     const RefineConfig& cfg) {
  cfg.validate();
  if (!box.valid()) throw degenerate_error("edgebox_score needs a non-empty box");
  const CellBox full = snap_to_cells(em, box);

  // Contour band straddling the box border: half the margin inside, half
  // outside, so the score peaks when the border sits on the contour.
  const int band_x =
      std::max(1, static_cast<int>(std::lround(0.5 * cfg.inner_margin * full.width())));
  const int band_y =
      std::max(1, static_cast<int>(std::lround(0.5 * cfg.inner_margin * full.height())));
  CellBox core;
  core.x0 = full.x0 + band_x;
  core.y0 = full.y0 + band_y;
  core.x1 = full.x1 - band_x;
  core.y1 = full.y1 - band_y;
  if (core.x0 >= core.x1 || core.y0 >= core.y1) {
    std::ostringstream msg;
    msg << "box of " << full.width() << "x" << full.height()
        << " cells degenerates after shrinking the border band";
    throw degenerate_error(msg.str());
  }
  CellBox outer;
  outer.x0 = std::max(0, full.x0 - band_x);
  outer.y0 = std::max(0, full.y0 - band_y);
  outer.x1 = std::min(em.width(), full.x1 + band_x);
  outer.y1 = std::min(em.height(), full.y1 + band_y);

  const double band = em.mass(outer) - em.mass(core);
  const double inside = em.mass(core);
  // Interior mass enters as a density so uniform background cancels instead of
  // scaling with the box area and drowning the contour signal.
  const double band_area = static_cast<double>(outer.area() - core.area());
  const double core_density = inside / static_cast<double>(core.area());
  const double perimeter = 2.0 * (full.width() + full.height());
  return (band - core_density * band_area) / std::pow(perimeter, cfg.kappa);
}

namespace {

template <typename ScoreFn>
BoundingBox coordinate_descent(const BoundingBox& start, const RefineConfig& cfg,
                               const ScoreFn& try_score) {
  BoundingBox cur = start;
  double best = 0.0;
  if (!try_score(cur, best)) return cur;
  double step_x = cfg.initial_step * start.width();
  double step_y = cfg.initial_step * start.height();

  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    if (step_x < cfg.min_step_px && step_y < cfg.min_step_px) break;
    bool improved = false;
    for (int move = 0; move < 8; ++move) {
      BoundingBox b = cur;
      const double sx = (move & 1) ? -step_x : step_x;
      const double sy = (move & 1) ? -step_y : step_y;
      switch (move >> 1) {
        case 0:  // shift x
          b.x0 += sx;
          b.x1 += sx;
          break;
        case 1:  // shift y
          b.y0 += sy;
          b.y1 += sy;
          break;
        case 2:  // grow/shrink width about the center
          b.x0 -= sx * 0.5;
          b.x1 += sx * 0.5;
          break;
        default:  // grow/shrink height about the center
          b.y0 -= sy * 0.5;
          b.y1 += sy * 0.5;
          break;
      }
      double s = 0.0;
      if (try_score(b, s) && s > best) {
        cur = b;
        best = s;
        improved = true;
      }
    }
    if (!improved) {
      step_x *= 0.5;
      step_y *= 0.5;
    }
  }
  return cur;
}

}  // namespace

RefineResult greedy_refine(const BoundingBox& box, const EdgeMap& em,
                           const RefineConfig& cfg) {
  cfg.validate();
  const double map_w = em.width() * em.stride();
  const double map_h = em.height() * em.stride();

  const auto scorer_with_margin = [&](double margin) {
    RefineConfig local = cfg;
    local.inner_margin = margin;
    return [&em, local, map_w, map_h](const BoundingBox& b, double& out) {
      if (!b.valid() || b.x0 < 0.0 || b.y0 < 0.0 || b.x1 > map_w || b.y1 > map_h)
        return false;
      try {
        out = edgebox_score(em, b, local);
        return true;
      } catch (const degenerate_error&) {
        return false;
      }
    };
  };

  RefineResult result;
  result.box = box;
  const auto final_score = scorer_with_margin(cfg.inner_margin);
  double input_score = 0.0;
  if (!final_score(box, input_score)) {
    result.score = -std::numeric_limits<double>::infinity();
    result.scored = false;
    return result;
  }

  // The band is narrow, so a box more than a band-width off sits on a flat
  // score plateau where strict-improvement descent stalls. A whole-cell shift
  // scan around the start covers the coarse-grid quantization range, then
  // coordinate descent aligns position and size from the best placement.
  BoundingBox cur = box;
  double cur_score = input_score;
  const double step = em.stride();
  for (int dy = -4; dy <= 4; ++dy) {
    for (int dx = -4; dx <= 4; ++dx) {
      if (dx == 0 && dy == 0) continue;
      const BoundingBox shifted{box.x0 + dx * step, box.y0 + dy * step,
                                box.x1 + dx * step, box.y1 + dy * step};
      double s = 0.0;
      if (final_score(shifted, s) && s > cur_score) {
        cur = shifted;
        cur_score = s;
      }
    }
  }
  cur = coordinate_descent(cur, cfg, final_score);

  double refined_score = 0.0;
  if (final_score(cur, refined_score) && refined_score > input_score) {
    result.box = cur;
    result.score = refined_score;
    result.moved = true;
  } else {
    result.score = input_score;
  }
  return result;
}

}  // namespace dp
