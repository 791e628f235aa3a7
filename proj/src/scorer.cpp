#include "deepproposal/scorer.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "deepproposal/errors.hpp"
#include "deepproposal/random.hpp"

namespace dp {

void TrainConfig::validate() const {
  if (!(0.0 <= neg_overlap && neg_overlap < pos_overlap && pos_overlap <= 1.0)) {
    std::ostringstream msg;
    msg << "overlap bounds must satisfy 0 <= neg < pos <= 1, got neg=" << neg_overlap
        << " pos=" << pos_overlap;
    throw config_error(msg.str());
  }
  if (pos_per_image < 0 || neg_per_image < 0)
    throw config_error("per-image sample quotas must be non-negative");
  if (!(c > 0.0)) throw config_error("regularization c must be positive");
  if (epochs < 1) throw config_error("epochs must be >= 1");
}

double score(const LinearModel& model, std::span<const double> descriptor) {
  if (descriptor.size() != model.weights.size()) {
    std::ostringstream msg;
    msg << "descriptor has " << descriptor.size() << " dims, model expects "
        << model.weights.size();
    throw config_error(msg.str());
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < descriptor.size(); ++i)
    acc += model.weights[i] * descriptor[i];
  return acc + model.bias;
}

namespace {

// First k of a seeded uniform shuffle, without replacement.
std::vector<std::size_t> draw_without_replacement(std::vector<std::size_t> pool,
                                                  std::size_t k, std::mt19937_64& rng) {
  k = std::min(k, pool.size());
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + uniform_index(rng, pool.size() - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  std::sort(pool.begin(), pool.end());
  return pool;
}

}  // namespace

MinedSamples mine_samples(std::span<const BoundingBox> window_boxes,
                          std::span<const BoundingBox> gt, const TrainConfig& cfg,
                          std::uint64_t seed) {
  cfg.validate();
  std::vector<std::size_t> pos_pool, neg_pool;
  for (std::size_t i = 0; i < window_boxes.size(); ++i) {
    double best = 0.0;
    for (const auto& g : gt) best = std::max(best, iou(window_boxes[i], g));
    if (best > cfg.pos_overlap)
      pos_pool.push_back(i);
    else if (best < cfg.neg_overlap)
      neg_pool.push_back(i);
  }
  std::mt19937_64 rng(seed);
  MinedSamples out;
  out.positives = draw_without_replacement(std::move(pos_pool),
                                           static_cast<std::size_t>(cfg.pos_per_image), rng);
  out.negatives = draw_without_replacement(std::move(neg_pool),
                                           static_cast<std::size_t>(cfg.neg_per_image), rng);
  return out;
}

void TrainSet::add(std::span<const double> x, int label) {
  if (dim == 0) dim = x.size();
  if (x.size() != dim) {
    std::ostringstream msg;
    msg << "sample has " << x.size() << " dims, training set expects " << dim;
    throw config_error(msg.str());
  }
  features.insert(features.end(), x.begin(), x.end());
  labels.push_back(label >= 0 ? 1 : -1);
}

double svm_objective(const LinearModel& model, const TrainSet& samples, double c) {
  const double n = static_cast<double>(samples.size());
  const double lambda = 1.0 / (c * n);
  double sq = model.bias * model.bias;
  for (double w : model.weights) sq += w * w;
  double hinge = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double margin = samples.labels[i] * score(model, samples.row(i));
    hinge += std::max(0.0, 1.0 - margin);
  }
  return 0.5 * lambda * sq + hinge / n;
}

LinearModel train_linear_svm(const TrainSet& samples, const TrainConfig& cfg) {
  cfg.validate();
  const std::size_t n = samples.size();
  if (n == 0) throw config_error("training set is empty");
  bool has_pos = false, has_neg = false;
  for (int y : samples.labels) (y > 0 ? has_pos : has_neg) = true;
  if (!has_pos || !has_neg)
    throw config_error("training needs both positive and negative samples");

  const std::size_t dim = samples.dim;
  const double lambda = 1.0 / (cfg.c * static_cast<double>(n));

  // Bias as augmented feature dim so one update rule covers everything.
  std::vector<double> w(dim + 1, 0.0);
  std::vector<double> avg(dim + 1, 0.0);
  std::size_t avg_count = 0;
  const int avg_from_epoch = cfg.epochs / 2;  // suffix averaging

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(splitmix64(cfg.seed));

  std::size_t t = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t j = i + uniform_index(rng, n - i);
      std::swap(order[i], order[j]);
    }
    for (std::size_t i = 0; i < n; ++i) {
      ++t;
      const double eta = 1.0 / (lambda * static_cast<double>(t));
      const std::size_t s = order[i];
      const auto x = samples.row(s);
      const double y = samples.labels[s];
      double f = w[dim];
      for (std::size_t d = 0; d < dim; ++d) f += w[d] * x[d];
      const double shrink = 1.0 - eta * lambda;
      for (double& wd : w) wd *= shrink;
      if (y * f < 1.0) {
        const double step = eta * y;
        for (std::size_t d = 0; d < dim; ++d) w[d] += step * x[d];
        w[dim] += step;
      }
      if (epoch >= avg_from_epoch) {
        for (std::size_t d = 0; d <= dim; ++d) avg[d] += w[d];
        ++avg_count;
      }
    }
  }

  LinearModel model;
  model.weights.assign(dim, 0.0);
  if (avg_count > 0) {
    for (std::size_t d = 0; d < dim; ++d)
      model.weights[d] = avg[d] / static_cast<double>(avg_count);
    model.bias = avg[dim] / static_cast<double>(avg_count);
  } else {
    for (std::size_t d = 0; d < dim; ++d) model.weights[d] = w[d];
    model.bias = w[dim];
  }
  return model;
}

std::vector<double> normalize_scores(std::span<const double> scores) {
  if (scores.empty()) throw config_error("normalize_scores needs a non-empty input");
  double lo = scores[0], hi = scores[0];
  for (double s : scores) {
    if (!std::isfinite(s)) throw data_error("normalize_scores saw a non-finite score");
    lo = std::min(lo, s);
    hi = std::max(hi, s);
  }
  std::vector<double> out(scores.size());
  if (hi == lo) {
    std::fill(out.begin(), out.end(), 1.0);
    return out;
  }
  const double inv = 1.0 / (hi - lo);
  for (std::size_t i = 0; i < scores.size(); ++i) out[i] = (scores[i] - lo) * inv;
  return out;
}

}  // namespace dp
