#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "deepproposal/geometry.hpp"

namespace dp {

// Proposals (ranked by descending score) and ground truth for one image.
struct ImageEvalData {
  std::string image_id;
  std::vector<ScoredBox> proposals;
  std::vector<BoundingBox> groundtruth;
};

struct Curve {
  std::vector<double> x;
  std::vector<double> y;
};

struct EvalConfig {
  double beta = 0.5;       // IoU threshold for recall-vs-N and N@target
  int budget = 1000;       // per-image proposal budget for recall-vs-IoU and AUC
  int max_boxes = 2000;    // cap on the N grid
  std::vector<int> n_grid{1, 2, 5, 10, 20, 50, 100, 200, 500, 1000, 2000};
  std::vector<double> iou_grid;           // defaults to 0.5 : 0.025 : 1.0
  std::vector<double> targets{0.25, 0.50, 0.75};

  void apply_defaults();
};

struct EvalReport {
  Curve recall_vs_n;
  Curve recall_vs_iou;
  Curve average_recall_vs_n;
  double auc = 0.0;
  std::map<double, std::optional<int>> n_at;  // target recall -> smallest N, or unreachable
  double ar_at_100 = 0.0;
  double ar_at_1000 = 0.0;
  std::size_t total_groundtruth = 0;
  std::size_t total_images = 0;
  EvalConfig config;
};

// Recall over all ground truth using each image's top-N proposals, for each N in
// the grid. Throws config_error when any image's proposals are not ranked by
// descending score.
Curve recall_vs_n(std::span<const ImageEvalData> data, double beta,
                  std::span<const int> n_grid);

// Recall across an IoU grid at a fixed per-image budget.
Curve recall_vs_iou(std::span<const ImageEvalData> data, int budget,
                    std::span<const double> iou_grid);

// Trapezoidal area under a recall-vs-IoU curve over [0.5, 1], normalized by the
// interval width so a constant-1 curve scores 1. Needs >= 2 grid points sorted
// ascending.
double auc(const Curve& curve);

// Mean over ground truth of max(0, 2*(best IoU - 0.5)) with the per-image top-N
// budget: the closed form of recall integrated over IoU in [0.5, 1].
Curve average_recall(std::span<const ImageEvalData> data, std::span<const int> n_grid);

// Smallest per-image budget N reaching recall >= target at IoU beta, found by
// binary search over the monotone recall-vs-N relation; nullopt when no budget
// attains the target.
std::optional<int> n_at_recall(std::span<const ImageEvalData> data, double beta,
                               double target);

// Full metric suite; validates curve monotonicity before returning.
EvalReport build_report(std::span<const ImageEvalData> data, EvalConfig cfg);

}  // namespace dp
