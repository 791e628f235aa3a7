#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "deepproposal/featmap.hpp"
#include "deepproposal/geometry.hpp"

namespace dp {

// Per-(scale, stage) linear objectness scorer over assembled descriptors.
struct LinearModel {
  std::vector<double> weights;
  double bias = 0.0;
  int scale_id = 0;
  int stage_id = 1;
  std::vector<int> pyramid_levels{0};

  std::size_t dim() const { return weights.size(); }
};

struct TrainConfig {
  double pos_overlap = 0.7;
  double neg_overlap = 0.3;
  int pos_per_image = 10;
  int neg_per_image = 50;
  double c = 1.0;  // inverse regularization strength
  int epochs = 30;
  std::uint64_t seed = 0;

  void validate() const;
};

// weights . d + bias. Throws config_error naming both dims on mismatch.
double score(const LinearModel& model, std::span<const double> descriptor);

inline double score(const LinearModel& model, const Descriptor& d) {
  return score(model, std::span<const double>(d.values));
}

struct MinedSamples {
  std::vector<std::size_t> positives;  // indices into the window list
  std::vector<std::size_t> negatives;
};

// Sample training windows for one image: positives have best-gt IoU strictly above
// cfg.pos_overlap, negatives strictly below cfg.neg_overlap; windows in between are
// never drawn. Up to pos_per_image / neg_per_image each, drawn uniformly without
// replacement under the seed. Boxes are in the same (image) coordinates as gt.
MinedSamples mine_samples(std::span<const BoundingBox> window_boxes,
                          std::span<const BoundingBox> gt, const TrainConfig& cfg,
                          std::uint64_t seed);

struct TrainSet {
  std::size_t dim = 0;
  std::vector<double> features;  // row-major, one row per sample
  std::vector<int> labels;       // +1 / -1

  std::size_t size() const { return labels.size(); }
  std::span<const double> row(std::size_t i) const {
    return {features.data() + i * dim, dim};
  }
  void add(std::span<const double> x, int label);
};

// L2-regularized hinge-loss training by seeded stochastic subgradient descent
// with step 1/(lambda*t), lambda = 1/(c*n). The bias rides along as an extra
// always-one feature. Iterates from the second half of training are averaged.
// Deterministic under cfg.seed. Throws config_error when only one class is present.
LinearModel train_linear_svm(const TrainSet& samples, const TrainConfig& cfg);

// Mean hinge objective of a model on a training set (regularizer included).
double svm_objective(const LinearModel& model, const TrainSet& samples, double c);

// Affine map of scores onto [0,1]: (s - min) / (max - min). An all-equal input
// maps every entry to 1.0 so a uniform-score scale survives truncation.
std::vector<double> normalize_scores(std::span<const double> scores);

}  // namespace dp
