#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cadx::eval {

/// Thrown when a metric's denominator is zero; the message names the metric.
class UndefinedMetricError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Positive = HIGH risk.
struct BinaryCounts {
  std::int64_t tp = 0;
  std::int64_t tn = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;

  std::int64_t total() const { return tp + tn + fp + fn; }
  BinaryCounts& operator+=(const BinaryCounts& o);
  bool operator==(const BinaryCounts&) const = default;
};

double accuracy(const BinaryCounts& c);     // (TP+TN)/(TP+FP+FN+TN)
double sensitivity(const BinaryCounts& c);  // TP/(TP+FN)
double specificity(const BinaryCounts& c);  // TN/(TN+FP)

struct BinaryMetrics {
  double accuracy = 0.0;
  double sensitivity = 0.0;
  double specificity = 0.0;
};

/// All three; throws UndefinedMetricError if any is undefined.
BinaryMetrics metrics(const BinaryCounts& c);

struct Interval {
  double lower = 0.0;
  double upper = 1.0;
};

/// Exact binomial interval at level 1 - alpha, by bisection on the binomial
/// tails to absolute tolerance 1e-12.
Interval clopper_pearson(std::int64_t k, std::int64_t n, double alpha = 0.05);

/// P[X >= k] for X ~ Binomial(n, p).
double binomial_upper_tail(std::int64_t k, std::int64_t n, double p);
/// P[X <= k] for X ~ Binomial(n, p).
double binomial_lower_tail(std::int64_t k, std::int64_t n, double p);

/// Rows are actual classes, columns predicted.
struct ConfusionMatrix {
  int classes = 0;
  std::vector<std::int64_t> counts;

  std::int64_t at(int actual, int predicted) const { return counts[static_cast<std::size_t>(actual) * classes + predicted]; }
  std::int64_t& at(int actual, int predicted) { return counts[static_cast<std::size_t>(actual) * classes + predicted]; }
  std::int64_t total() const;
  std::int64_t trace() const;
  /// Row-normalized view; empty rows stay zero.
  std::vector<double> normalized() const;
  ConfusionMatrix& operator+=(const ConfusionMatrix& o);
  bool operator==(const ConfusionMatrix&) const = default;
};

ConfusionMatrix confusion(std::span<const int> actual, std::span<const int> predicted, int classes);

struct RocPoint {
  double threshold = 0.0;
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;
  double auc = 0.0;
};

/// Positive call iff score > threshold. Thresholds are the distinct scores in
/// descending order followed by a sentinel below the minimum, so the curve runs
/// from (0,0) to (1,1). AUC by the trapezoid rule.
RocCurve roc_and_auc(std::span<const double> scores, std::span<const int> truth);

/// Mann-Whitney statistic with ties counted one half.
double mann_whitney_auc(std::span<const double> scores, std::span<const int> truth);

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;
  int n = 0;
};

/// Sample standard deviation (n - 1); sd is 0 for a single value.
MeanSd mean_sd(std::span<const double> values);

}  // namespace cadx::eval
