#include "deepproposal/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "deepproposal/errors.hpp"

namespace dp {

double intersection_area(const BoundingBox& a, const BoundingBox& b) {
  const double w = std::min(a.x1, b.x1) - std::max(a.x0, b.x0);
  const double h = std::min(a.y1, b.y1) - std::max(a.y0, b.y0);
  if (w <= 0.0 || h <= 0.0) return 0.0;
  return w * h;
}

double iou(const BoundingBox& a, const BoundingBox& b) {
  const double inter = intersection_area(a, b);
  if (inter <= 0.0) return 0.0;
  const double uni = a.area() + b.area() - inter;
  return inter / uni;
}

bool score_order(const ScoredBox& a, const ScoredBox& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.box.x0 != b.box.x0) return a.box.x0 < b.box.x0;
  if (a.box.y0 != b.box.y0) return a.box.y0 < b.box.y0;
  return a.box.area() < b.box.area();
}

namespace {

// Uniform-grid index over retained boxes. Two boxes intersect iff they share at
// least one covered grid cell, so a candidate only gets IoU-checked against
// retained boxes found in the cells it covers.
class OverlapIndex {
 public:
  OverlapIndex(double min_x, double min_y, double max_x, double max_y, double cell) {
    cell_ = std::max(cell, 1e-9);
    min_x_ = min_x;
    min_y_ = min_y;
    nx_ = std::max<long>(1, static_cast<long>(std::ceil((max_x - min_x) / cell_)));
    ny_ = std::max<long>(1, static_cast<long>(std::ceil((max_y - min_y) / cell_)));
    const long cap = 512;
    if (nx_ > cap) { cell_ = std::max(cell_, (max_x - min_x) / cap); }
    if (ny_ > cap) { cell_ = std::max(cell_, (max_y - min_y) / cap); }
    nx_ = std::min(nx_, cap);
    ny_ = std::min(ny_, cap);
    cells_.resize(static_cast<std::size_t>(nx_ * ny_));
  }

  template <typename Fn>
  void for_each_neighbor(const BoundingBox& b, Fn&& fn) {
    long cx0, cy0, cx1, cy1;
    range(b, cx0, cy0, cx1, cy1);
    for (long cy = cy0; cy <= cy1; ++cy)
      for (long cx = cx0; cx <= cx1; ++cx)
        for (int id : cells_[static_cast<std::size_t>(cy * nx_ + cx)]) fn(id);
  }

  void insert(const BoundingBox& b, int id) {
    long cx0, cy0, cx1, cy1;
    range(b, cx0, cy0, cx1, cy1);
    for (long cy = cy0; cy <= cy1; ++cy)
      for (long cx = cx0; cx <= cx1; ++cx)
        cells_[static_cast<std::size_t>(cy * nx_ + cx)].push_back(id);
  }

 private:
  void range(const BoundingBox& b, long& cx0, long& cy0, long& cx1, long& cy1) const {
    cx0 = std::clamp<long>(static_cast<long>(std::floor((b.x0 - min_x_) / cell_)), 0, nx_ - 1);
    cy0 = std::clamp<long>(static_cast<long>(std::floor((b.y0 - min_y_) / cell_)), 0, ny_ - 1);
    cx1 = std::clamp<long>(static_cast<long>(std::floor((b.x1 - min_x_) / cell_)), 0, nx_ - 1);
    cy1 = std::clamp<long>(static_cast<long>(std::floor((b.y1 - min_y_) / cell_)), 0, ny_ - 1);
  }

  double cell_ = 1.0, min_x_ = 0.0, min_y_ = 0.0;
  long nx_ = 1, ny_ = 1;
  std::vector<std::vector<int>> cells_;
};

}  // namespace

std::vector<std::size_t> nms_keep_indices(std::span<const ScoredBox> candidates,
                                          double threshold, std::size_t keep) {
  if (!(threshold > 0.0 && threshold <= 1.0)) {
    std::ostringstream msg;
    msg << "nms threshold must be in (0,1], got " << threshold;
    throw config_error(msg.str());
  }
  if (candidates.empty() || keep == 0) return {};

  std::vector<std::size_t> order(candidates.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return score_order(candidates[a], candidates[b]);
  });

  double min_x = candidates[0].box.x0, min_y = candidates[0].box.y0;
  double max_x = candidates[0].box.x1, max_y = candidates[0].box.y1;
  double sum_w = 0.0, sum_h = 0.0;
  for (const auto& c : candidates) {
    min_x = std::min(min_x, c.box.x0);
    min_y = std::min(min_y, c.box.y0);
    max_x = std::max(max_x, c.box.x1);
    max_y = std::max(max_y, c.box.y1);
    sum_w += c.box.width();
    sum_h += c.box.height();
  }
  const double n = static_cast<double>(candidates.size());
  OverlapIndex index(min_x, min_y, max_x, max_y, std::max(sum_w, sum_h) / n);

  std::vector<std::size_t> retained;
  std::vector<BoundingBox> retained_boxes;
  std::vector<int> last_seen;  // dedup stamp per retained id, keyed by scan position
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto& cand = candidates[order[i]];
    bool suppressed = false;
    index.for_each_neighbor(cand.box, [&](int id) {
      if (suppressed || last_seen[static_cast<std::size_t>(id)] == static_cast<int>(i)) return;
      last_seen[static_cast<std::size_t>(id)] = static_cast<int>(i);
      if (iou(cand.box, retained_boxes[static_cast<std::size_t>(id)]) > threshold)
        suppressed = true;
    });
    if (suppressed) continue;
    const int id = static_cast<int>(retained.size());
    retained.push_back(order[i]);
    retained_boxes.push_back(cand.box);
    last_seen.push_back(-1);
    index.insert(cand.box, id);
    if (retained.size() >= keep) break;
  }
  return retained;
}

std::vector<ScoredBox> nms(std::vector<ScoredBox> candidates, double threshold,
                           std::size_t keep) {
  const auto kept = nms_keep_indices(candidates, threshold, keep);
  std::vector<ScoredBox> out;
  out.reserve(kept.size());
  for (std::size_t i : kept) out.push_back(candidates[i]);
  return out;
}

RecallResult greedy_match_recall(std::span<const BoundingBox> proposals,
                                 std::span<const BoundingBox> groundtruth,
                                 double beta) {
  if (!(beta > 0.0 && beta <= 1.0)) {
    std::ostringstream msg;
    msg << "recall threshold must be in (0,1], got " << beta;
    throw config_error(msg.str());
  }
  RecallResult result;
  if (groundtruth.empty()) {
    result.recall = 1.0;
    result.empty_groundtruth = true;
    return result;
  }
  result.gt_match.assign(groundtruth.size(), -1);
  std::size_t recalled = 0;
  for (std::size_t g = 0; g < groundtruth.size(); ++g) {
    double best = 0.0;
    int best_idx = -1;
    for (std::size_t p = 0; p < proposals.size(); ++p) {
      const double v = iou(proposals[p], groundtruth[g]);
      if (v > best) {
        best = v;
        best_idx = static_cast<int>(p);
      }
    }
    if (best >= beta && best_idx >= 0) {
      result.gt_match[g] = best_idx;
      ++recalled;
    }
  }
  result.recall = static_cast<double>(recalled) / static_cast<double>(groundtruth.size());
  return result;
}

}  // namespace dp
