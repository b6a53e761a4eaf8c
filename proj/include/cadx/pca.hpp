#pragma once

#include <span>
#include <vector>

namespace cadx {

struct PcaModel {
  std::vector<double> mean;
  /// q rows of length d, orthonormal.
  std::vector<std::vector<double>> axes;
  /// Sample-covariance eigenvalues for the kept axes, nonincreasing.
  std::vector<double> variances;
  /// Trace of the sample covariance.
  double total_variance = 0.0;
};

/// Top-q principal axes of the sample covariance (n - 1 normalization).
/// Each axis is signed so its largest-magnitude entry is positive. When the
/// dimension exceeds the sample count the Gram matrix is decomposed instead;
/// q must then not exceed the rank of the centered data.
PcaModel pca_fit(std::span<const std::vector<double>> features, int q = 3);

std::vector<double> pca_project(const PcaModel& model, std::span<const double> feature);

}  // namespace cadx
