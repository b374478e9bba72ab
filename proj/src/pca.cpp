#include "anomkit/pca.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

#include "anomkit/errors.hpp"

namespace anomkit {

PcaModel pca_fit(const Matrix& data, PcaMode mode, double value) {
  const Eigen::Index n = data.rows(), d = data.cols();
  if (n < 2) throw ParameterError("pca_fit: need at least 2 samples");
  if (d < 1) throw ParameterError("pca_fit: need at least 1 dimension");
  if (mode == PcaMode::fixed_k && (value < 1 || value > static_cast<double>(d) ||
                                   value != std::floor(value))) {
    throw ParameterError("pca_fit: fixed_k must be an integer in [1, d]");
  }
  if (mode == PcaMode::variance_frac && !(value > 0.0 && value <= 1.0)) {
    throw ParameterError("pca_fit: variance fraction must lie in (0, 1]");
  }

  PcaModel model;
  model.mean = data.colwise().mean().transpose();
  const Matrix centered = data.rowwise() - model.mean.transpose();
  const Eigen::MatrixXd cov =
      (centered.transpose() * centered) / static_cast<double>(n - 1);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw FittingError("pca_fit: eigendecomposition failed");
  // Eigen returns ascending eigenvalues.
  Vector evals = solver.eigenvalues().reverse();
  Eigen::MatrixXd evecs = solver.eigenvectors().rowwise().reverse();
  for (Eigen::Index i = 0; i < d; ++i) evals[i] = std::max(evals[i], 0.0);

  const double total = evals.sum();
  const double zero_tol = 1e-12 * std::max(evals.maxCoeff(), 1e-300);
  Eigen::Index keep = 1;
  if (mode == PcaMode::fixed_k) {
    keep = static_cast<Eigen::Index>(value);
  } else if (total > 0.0) {
    double acc = 0.0;
    keep = 0;
    while (keep < d) {
      if (evals[keep] <= zero_tol) break;
      acc += evals[keep];
      ++keep;
      if (acc >= value * total * (1.0 - 1e-12)) break;
    }
    keep = std::max<Eigen::Index>(keep, 1);
  }

  model.components.resize(keep, d);
  for (Eigen::Index k = 0; k < keep; ++k) {
    Vector v = evecs.col(k);
    for (Eigen::Index j = 0; j < d; ++j) {
      if (std::abs(v[j]) > 1e-12) {
        if (v[j] < 0) v = -v;
        break;
      }
    }
    model.components.row(k) = v.transpose();
  }
  model.eigenvalues = evals;
  model.retained_fraction = total > 0.0 ? evals.head(keep).sum() / total : 1.0;
  return model;
}

Vector pca_project(const PcaModel& model, const Eigen::Ref<const Vector>& x) {
  if (x.size() != model.mean.size()) {
    throw DimensionError("pca_project: vector of length " + std::to_string(x.size()) +
                         ", model expects " + std::to_string(model.mean.size()));
  }
  return model.components * (x - model.mean);
}

Matrix pca_project_rows(const PcaModel& model, const Matrix& rows) {
  if (rows.cols() != model.mean.size()) throw DimensionError("pca_project_rows: width mismatch");
  Matrix centered = rows.rowwise() - model.mean.transpose();
  return centered * model.components.transpose();
}

}  // namespace anomkit
