#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cadx/config.hpp"
#include "cadx/evaluation.hpp"
#include "cadx/pipeline.hpp"

namespace cadx {

/// Specimen-level fold assignment.
struct FoldPlan {
  int k = 0;
  std::map<std::string, int> specimen_fold;

  int fold_of(const std::string& specimen_id) const;
  /// Indices of manifest entries whose specimen is (or is not) in `fold`.
  std::vector<std::size_t> test_entries(const Manifest& m, int fold) const;
  std::vector<std::size_t> train_entries(const Manifest& m, int fold) const;
  /// Volume count per fold.
  std::vector<int> fold_sizes(const Manifest& m) const;
};

/// Greedy balancing. Specimens are sorted by (class, volume count) descending
/// and each goes to the fold with the fewest volumes so far; ties go to the
/// fold with fewer volumes of that class, then to a seeded fold order.
/// Throws DataError when there are fewer specimens than folds.
FoldPlan plan_folds(const Manifest& manifest, int k, std::uint64_t seed);

/// Scaler over the ages of volumes outside the test fold.
AgeScaler fit_fold_age_scaler(const Manifest& manifest, const FoldPlan& plan, int fold);

struct BinaryReport {
  eval::BinaryCounts counts;
  std::optional<double> accuracy, sensitivity, specificity;
  std::optional<eval::Interval> accuracy_ci, sensitivity_ci, specificity_ci;
};

BinaryReport binary_report(const eval::BinaryCounts& counts);

struct FoldResult {
  int fold = 0;
  bool degenerate = false;
  std::string warning;
  std::size_t train_volumes = 0;
  std::vector<std::size_t> test_entries;
  AgeScaler age_scaler;
  std::vector<double> cnn_epoch_loss;
  std::vector<VolumePrediction> predictions;
  std::vector<int> truth;  // fine labels, parallel to predictions
  eval::ConfusionMatrix fine;
  eval::ConfusionMatrix binary;
  double fine_accuracy = 0.0;
  BinaryReport binary_metrics;
  std::optional<double> auc;
};

struct EvalReport {
  int k = 0;
  std::uint64_t seed = 0;
  std::size_t volumes = 0;
  RejectCounts rejects{};
  std::vector<FoldResult> folds;

  eval::ConfusionMatrix fine;
  eval::ConfusionMatrix binary;
  std::optional<double> fine_accuracy;
  std::optional<eval::Interval> fine_accuracy_ci;
  BinaryReport binary_metrics;
  std::optional<eval::RocCurve> roc;

  eval::MeanSd fold_fine_accuracy, fold_binary_accuracy, fold_sensitivity, fold_specificity, fold_auc;
  ProbabilityAudit audit;
};

/// Specimen-grouped cross-validation of the whole pipeline. Folds whose
/// training split lacks a class are reported as degenerate and left out of
/// the pooled and mean/sd figures. Progress goes to `log` when given.
EvalReport cross_validate(const Manifest& manifest, const RunConfig& config, std::ostream* log = nullptr);
EvalReport cross_validate(const PreparedDataset& data, const RunConfig& config, std::ostream* log = nullptr);

inline constexpr int kReportVersion = 1;
nlohmann::ordered_json report_to_json(const EvalReport& report, const Manifest& manifest);

}  // namespace cadx
