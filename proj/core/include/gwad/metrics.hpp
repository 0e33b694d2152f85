#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gwad/array.hpp"

namespace gwad {

// Mean over the batch of -log p[label], with p clamped to
// [1e-7, 1 - 1e-7]. `probabilities` is [batch, 2] (rows from softmax);
// differentiable through the unclamped entries.
template <typename T>
Array<T> cross_entropy(const Array<T>& probabilities,
                       std::span<const std::int32_t> labels);

struct Confusion {
  std::int64_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::int64_t total() const { return tp + fp + tn + fn; }
};

// Positive iff score > threshold (strict; a score exactly at the threshold
// counts as negative).
Confusion confusion(std::span<const double> scores,
                    std::span<const std::int32_t> labels, double threshold);

// TN / (TN + FP). Throws UndefinedMetricError when there are no negatives.
double tnr(std::int64_t tn, std::int64_t fp);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocResult {
  std::vector<RocPoint> points;  // monotone from (0,0) to (1,1)
  double auc = 0.0;
};

// Threshold sweep over all distinct scores (ties grouped into one step),
// AUC by the trapezoidal rule. Equals the pairwise statistic
// P(score_pos > score_neg) + 0.5 * P(tie). Throws UndefinedMetricError
// unless both classes are present.
RocResult roc_auc(std::span<const double> scores,
                  std::span<const std::int32_t> labels);

struct EvalReport {
  double threshold = 0.5;
  Confusion counts;
  double tnr = 0.0;
  double fpr = 1.0;  // exact complement of tnr
  double tpr = 0.0;
  double accuracy = 0.0;
  bool roc_valid = false;
  std::vector<RocPoint> roc_points;
  double auc = 0.0;
  // Competition-style operating point: highest threshold with TPR >= 0.9.
  double threshold_at_tpr90 = 0.0;
  double tnr_at_tpr90 = 0.0;
};

// Builds the full report from class-1 scores at the given threshold. When
// only one class is present the confusion block is still filled and
// roc_valid stays false.
EvalReport make_report(std::span<const double> scores,
                       std::span<const std::int32_t> labels, double threshold);

// report.txt (key-value lines) and roc.csv ("fpr,tpr", 9 significant digits).
void write_report(const std::filesystem::path& report_path,
                  const std::filesystem::path& roc_csv_path,
                  const EvalReport& report);

std::string format_report(const EvalReport& report);

}  // namespace gwad
