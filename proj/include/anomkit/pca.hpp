#pragma once

#include <Eigen/Core>
#include <vector>

namespace anomkit {

/// Row-major double matrix; one sample per row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

enum class PcaMode { fixed_k, variance_frac };

struct PcaModel {
  Vector mean;
  Matrix components;    // k x d, orthonormal rows, descending eigenvalue
  Vector eigenvalues;   // all d eigenvalues, descending (clamped at 0)
  double retained_fraction = 0.0;

  std::size_t dim() const { return static_cast<std::size_t>(components.rows()); }
};

/// PCA of mean-centered data via the covariance eigendecomposition.
/// Eigenvector signs are fixed so the first nonzero coordinate is positive.
/// variance_frac keeps the smallest prefix reaching value * total variance;
/// zero-variance data keeps a single component.
PcaModel pca_fit(const Matrix& data, PcaMode mode, double value);

Vector pca_project(const PcaModel& model, const Eigen::Ref<const Vector>& x);

/// Projects every row.
Matrix pca_project_rows(const PcaModel& model, const Matrix& rows);

}  // namespace anomkit
