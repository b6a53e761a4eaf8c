#include "cadx/pca.hpp"

#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "cadx/common.hpp"

namespace cadx {

namespace {

void fix_sign(std::vector<double>& axis) {
  std::size_t peak = 0;
  for (std::size_t i = 1; i < axis.size(); ++i)
    if (std::abs(axis[i]) > std::abs(axis[peak])) peak = i;
  if (axis[peak] < 0.0)
    for (double& v : axis) v = -v;
}

}  // namespace

PcaModel pca_fit(std::span<const std::vector<double>> features, int q) {
  if (q < 1) throw UsageError("pca: need at least one component");
  const auto n = static_cast<Eigen::Index>(features.size());
  if (n < q + 1) throw DataError("pca: need at least q + 1 samples");
  const auto d = static_cast<Eigen::Index>(features.front().size());
  if (q > d) throw DataError("pca: q exceeds the feature dimension");

  Eigen::MatrixXd x(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& f = features[static_cast<std::size_t>(i)];
    if (static_cast<Eigen::Index>(f.size()) != d) throw DataError("pca: features differ in length");
    for (Eigen::Index j = 0; j < d; ++j) {
      if (!std::isfinite(f[static_cast<std::size_t>(j)])) throw NumericError("pca: non-finite feature");
      x(i, j) = f[static_cast<std::size_t>(j)];
    }
  }
  const Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;
  const double denom = static_cast<double>(n - 1);

  PcaModel model;
  model.mean.assign(mean.data(), mean.data() + d);
  model.total_variance = x.squaredNorm() / denom;

  if (d <= n) {
    const Eigen::MatrixXd cov = (x.transpose() * x) / denom;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    if (eig.info() != Eigen::Success) throw NumericError("pca: eigensolver failed");
    // Eigenvalues come out ascending.
    for (int k = 0; k < q; ++k) {
      const Eigen::Index c = d - 1 - k;
      model.variances.push_back(std::max(0.0, eig.eigenvalues()(c)));
      const Eigen::VectorXd v = eig.eigenvectors().col(c);
      model.axes.emplace_back(v.data(), v.data() + d);
    }
  } else {
    const Eigen::MatrixXd gram = (x * x.transpose()) / denom;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
    if (eig.info() != Eigen::Success) throw NumericError("pca: eigensolver failed");
    const double floor = 1e-12 * std::max(1.0, eig.eigenvalues()(n - 1));
    for (int k = 0; k < q; ++k) {
      const Eigen::Index c = n - 1 - k;
      const double lambda = eig.eigenvalues()(c);
      if (lambda <= floor) throw DataError("pca: q exceeds the rank of the centered data");
      Eigen::VectorXd v = x.transpose() * eig.eigenvectors().col(c);
      v.normalize();
      model.variances.push_back(lambda);
      model.axes.emplace_back(v.data(), v.data() + d);
    }
  }
  for (auto& axis : model.axes) fix_sign(axis);
  return model;
}

std::vector<double> pca_project(const PcaModel& model, std::span<const double> feature) {
  if (feature.size() != model.mean.size()) throw DataError("pca: feature length mismatch");
  std::vector<double> out;
  out.reserve(model.axes.size());
  for (const auto& axis : model.axes) {
    double s = 0.0;
    for (std::size_t j = 0; j < feature.size(); ++j) s += (feature[j] - model.mean[j]) * axis[j];
    out.push_back(s);
  }
  return out;
}

}  // namespace cadx
