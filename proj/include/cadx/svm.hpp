#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cadx::svm {

inline constexpr int kNumClasses = 5;

enum class KernelType { Rbf, Linear };

struct SvmConfig {
  KernelType kernel = KernelType::Rbf;
  double C = 1.0;
  /// RBF width; defaults to 1 / (d * Var(standardized features)).
  std::optional<double> gamma;
  /// KKT tolerance of the SMO stopping rule.
  double tolerance = 1e-3;
  std::int64_t max_iterations = 10'000'000;

  void validate() const;
};

struct Kernel {
  KernelType type = KernelType::Rbf;
  double gamma = 1.0;
  double operator()(std::span<const double> a, std::span<const double> b) const;
};

/// Soft-margin dual solution for labels y in {-1, +1}:
/// f(x) = sum_i alpha_i y_i K(x_i, x) + bias.
struct BinarySolution {
  std::vector<double> alpha;
  double bias = 0.0;
  std::int64_t iterations = 0;
};

/// SMO with second-order working-set selection on the full Gram matrix.
BinarySolution solve_binary(std::span<const std::vector<double>> x, std::span<const int> y, const Kernel& kernel,
                            double C, double tolerance, std::int64_t max_iterations = 10'000'000);

/// sum(alpha) - 1/2 sum_ij alpha_i alpha_j y_i y_j K(x_i, x_j)
double dual_objective(std::span<const std::vector<double>> x, std::span<const int> y, const Kernel& kernel,
                      std::span<const double> alpha);

/// Per-dimension standardization fitted on the training features.
struct FeatureScaler {
  std::vector<double> mean;
  std::vector<double> scale;
  std::vector<double> apply(std::span<const double> x) const;
};

/// One one-vs-one problem. Positive side (y = +1) is class_a < class_b.
struct PairModel {
  int class_a = 0;
  int class_b = 0;
  std::vector<std::vector<double>> support_vectors;
  /// alpha_i * y_i per support vector.
  std::vector<double> coefficients;
  double bias = 0.0;

  double decision(std::span<const double> scaled_x, const Kernel& kernel) const;
};

/// P(positive | score) = 1 / (1 + exp(a * score + b)).
struct PlattParams {
  double a = 0.0;
  double b = 0.0;
  double probability(double score) const;
};

/// Fits a sigmoid with regularized targets by Newton's method with backtracking.
/// positive[i] is 1 for members of the class, 0 otherwise.
PlattParams fit_platt(std::span<const double> scores, std::span<const int> positive);

struct SvmModel {
  SvmConfig config;
  Kernel kernel;
  int dimension = 0;
  FeatureScaler scaler;
  std::array<bool, kNumClasses> class_present{};
  std::vector<PairModel> pairs;
  /// One-vs-rest calibration per class; empty for absent classes.
  std::array<std::optional<PlattParams>, kNumClasses> platt;
};

/// Throws DataError for a single class or non-finite features.
SvmModel train_svm(std::span<const std::vector<double>> features, std::span<const int> labels,
                   const SvmConfig& config);

/// One-vs-rest score per class: sum of the pairwise decision values oriented
/// toward that class. Zero for absent classes.
std::array<double, kNumClasses> class_scores(const SvmModel& model, std::span<const double> feature);

/// One-vs-one vote. A zero pairwise decision and a vote tie both go to the
/// higher class code.
int predict_label(const SvmModel& model, std::span<const double> feature);

/// Platt sigmoid per class, renormalized to sum to one. Classes absent from
/// training get probability zero.
std::array<double, kNumClasses> predict_proba(const SvmModel& model, std::span<const double> feature);

/// "CADXSVM1" | u64 header length | JSON header | f64 support-vector blob.
std::string encode_svm_model(const SvmModel& model);
SvmModel decode_svm_model(std::string_view bytes);
void save_svm_model(const SvmModel& model, const std::filesystem::path& path);
SvmModel load_svm_model(const std::filesystem::path& path);

}  // namespace cadx::svm
