#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <vector>

namespace dp {

// Axis-aligned rectangle in image pixels, half-open: [x0,x1) x [y0,y1).
// Width and height are plain coordinate differences.
struct BoundingBox {
  double x0 = 0.0;
  double y0 = 0.0;
  double x1 = 0.0;
  double y1 = 0.0;

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  double area() const { return width() * height(); }
  bool valid() const { return x1 > x0 && y1 > y0; }
};

struct ScoredBox {
  BoundingBox box;
  double score = 0.0;
};

double intersection_area(const BoundingBox& a, const BoundingBox& b);

// |a n b| / |a u b|, in [0,1]. Symmetric, 1 iff identical, 0 iff disjoint interiors.
double iou(const BoundingBox& a, const BoundingBox& b);

// Deterministic ranking used everywhere boxes are ordered by score:
// higher score first; ties by lower x0, then lower y0, then smaller area.
bool score_order(const ScoredBox& a, const ScoredBox& b);

inline constexpr std::size_t kKeepAll = std::numeric_limits<std::size_t>::max();

// Greedy non-maximum suppression. A candidate is suppressed when its IoU with an
// already retained (higher ranked) box is strictly greater than `threshold`.
// Output is sorted by score_order and truncated to at most `keep` boxes.
std::vector<ScoredBox> nms(std::vector<ScoredBox> candidates, double threshold,
                           std::size_t keep = kKeepAll);

// Same suppression, but returns indices into `candidates` (in retained rank
// order) so callers can carry extra per-box state through.
std::vector<std::size_t> nms_keep_indices(std::span<const ScoredBox> candidates,
                                          double threshold,
                                          std::size_t keep = kKeepAll);

struct RecallResult {
  double recall = 0.0;
  // Per ground-truth box: index of the best-overlapping proposal with IoU >= beta,
  // or -1 when none qualifies. One proposal may match several ground-truth boxes.
  std::vector<int> gt_match;
  bool empty_groundtruth = false;
};

// Fraction of ground-truth boxes covered by at least one proposal at IoU >= beta.
// Empty ground truth yields recall 1.0 with the empty_groundtruth flag set.
RecallResult greedy_match_recall(std::span<const BoundingBox> proposals,
                                 std::span<const BoundingBox> groundtruth,
                                 double beta);

}  // namespace dp
