#include "deepproposal/eval.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "deepproposal/errors.hpp"

namespace dp {

void EvalConfig::apply_defaults() {
  if (iou_grid.empty()) {
    for (int i = 0; i <= 20; ++i) iou_grid.push_back(0.5 + 0.025 * i);
  }
  std::vector<int> capped;
  for (int n : n_grid)
    if (n <= max_boxes) capped.push_back(n);
  if (capped.empty()) capped.push_back(max_boxes);
  n_grid = std::move(capped);
}

namespace {

void check_ranked(std::span<const ImageEvalData> data) {
  for (const auto& img : data) {
    for (std::size_t i = 1; i < img.proposals.size(); ++i) {
      if (img.proposals[i - 1].score < img.proposals[i].score) {
        std::ostringstream msg;
        msg << "proposals for image '" << img.image_id
            << "' are not ranked by descending score; rank them (scores required) first";
        throw config_error(msg.str());
      }
    }
  }
}

// best_iou[g][k] = best overlap of ground-truth g with the top-(k+1) proposals.
// The prefix-max form answers every budget on the grid with one pass.
std::vector<std::vector<double>> prefix_best_iou(const ImageEvalData& img) {
  std::vector<std::vector<double>> best(img.groundtruth.size());
  for (std::size_t g = 0; g < img.groundtruth.size(); ++g) {
    auto& row = best[g];
    row.resize(img.proposals.size());
    double run = 0.0;
    for (std::size_t p = 0; p < img.proposals.size(); ++p) {
      run = std::max(run, iou(img.proposals[p].box, img.groundtruth[g]));
      row[p] = run;
    }
  }
  return best;
}

double best_at_budget(const std::vector<double>& prefix, int budget) {
  if (budget <= 0 || prefix.empty()) return 0.0;
  const std::size_t k = std::min(prefix.size(), static_cast<std::size_t>(budget));
  return prefix[k - 1];
}

struct PrefixTable {
  std::vector<std::vector<double>> rows;  // one row per ground-truth box, all images
  std::size_t total_gt = 0;

  explicit PrefixTable(std::span<const ImageEvalData> data) {
    for (const auto& img : data) {
      auto per_image = prefix_best_iou(img);
      for (auto& row : per_image) rows.push_back(std::move(row));
    }
    total_gt = rows.size();
  }

  double recall(int budget, double beta) const {
    if (total_gt == 0) return 1.0;
    std::size_t hit = 0;
    for (const auto& row : rows)
      if (best_at_budget(row, budget) >= beta) ++hit;
    return static_cast<double>(hit) / static_cast<double>(total_gt);
  }

  double average_recall(int budget) const {
    if (total_gt == 0) return 1.0;
    double total = 0.0;
    for (const auto& row : rows) {
      const double best = best_at_budget(row, budget);
      total += std::max(0.0, 2.0 * (best - 0.5));
    }
    return total / static_cast<double>(total_gt);
  }
};

}  // namespace

Curve recall_vs_n(std::span<const ImageEvalData> data, double beta,
                  std::span<const int> n_grid) {
  check_ranked(data);
  PrefixTable table(data);
  Curve curve;
  for (int n : n_grid) {
    curve.x.push_back(n);
    curve.y.push_back(table.recall(n, beta));
  }
  return curve;
}

Curve recall_vs_iou(std::span<const ImageEvalData> data, int budget,
                    std::span<const double> iou_grid) {
  check_ranked(data);
  PrefixTable table(data);
  Curve curve;
  for (double b : iou_grid) {
    curve.x.push_back(b);
    curve.y.push_back(table.recall(budget, b));
  }
  return curve;
}

double auc(const Curve& curve) {
  if (curve.x.size() < 2) throw config_error("auc needs at least two grid points");
  double area = 0.0;
  for (std::size_t i = 1; i < curve.x.size(); ++i) {
    const double dx = curve.x[i] - curve.x[i - 1];
    if (dx <= 0.0) throw config_error("auc grid must be sorted strictly ascending");
    area += 0.5 * (curve.y[i] + curve.y[i - 1]) * dx;
  }
  return area / (curve.x.back() - curve.x.front());
}

Curve average_recall(std::span<const ImageEvalData> data, std::span<const int> n_grid) {
  check_ranked(data);
  PrefixTable table(data);
  Curve curve;
  for (int n : n_grid) {
    curve.x.push_back(n);
    curve.y.push_back(table.average_recall(n));
  }
  return curve;
}

std::optional<int> n_at_recall(std::span<const ImageEvalData> data, double beta,
                               double target) {
  if (!(target > 0.0 && target <= 1.0)) {
    std::ostringstream msg;
    msg << "target recall must be in (0,1], got " << target;
    throw config_error(msg.str());
  }
  check_ranked(data);
  PrefixTable table(data);
  std::size_t max_n = 0;
  for (const auto& img : data) max_n = std::max(max_n, img.proposals.size());
  if (max_n == 0) max_n = 1;
  if (table.recall(static_cast<int>(max_n), beta) < target) return std::nullopt;
  int lo = 1, hi = static_cast<int>(max_n);
  while (lo < hi) {
    const int mid = lo + (hi - lo) / 2;
    if (table.recall(mid, beta) >= target)
      hi = mid;
    else
      lo = mid + 1;
  }
  return lo;
}

EvalReport build_report(std::span<const ImageEvalData> data, EvalConfig cfg) {
  cfg.apply_defaults();
  EvalReport report;
  report.config = cfg;
  report.total_images = data.size();
  for (const auto& img : data) report.total_groundtruth += img.groundtruth.size();

  report.recall_vs_n = recall_vs_n(data, cfg.beta, cfg.n_grid);
  report.recall_vs_iou = recall_vs_iou(data, cfg.budget, cfg.iou_grid);
  report.average_recall_vs_n = average_recall(data, cfg.n_grid);
  report.auc = auc(report.recall_vs_iou);
  for (double target : cfg.targets)
    report.n_at[target] = n_at_recall(data, cfg.beta, target);

  PrefixTable table(data);
  report.ar_at_100 = table.average_recall(100);
  report.ar_at_1000 = table.average_recall(1000);

  for (std::size_t i = 1; i < report.recall_vs_n.y.size(); ++i) {
    if (report.recall_vs_n.y[i] + 1e-12 < report.recall_vs_n.y[i - 1])
      throw data_error("recall-vs-N curve is not non-decreasing");
  }
  for (std::size_t i = 1; i < report.recall_vs_iou.y.size(); ++i) {
    if (report.recall_vs_iou.y[i] > report.recall_vs_iou.y[i - 1] + 1e-12)
      throw data_error("recall-vs-IoU curve is not non-increasing");
  }
  return report;
}

}  // namespace dp
