#include "anomkit/ocsvm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "anomkit/errors.hpp"
#include "anomkit/parallel.hpp"

namespace anomkit {

Vector Standardizer::apply(const Eigen::Ref<const Vector>& x) const {
  if (x.size() != offset.size()) throw UsageError("standardize: dimension mismatch");
  return (x - offset).cwiseQuotient(scale);
}

Matrix Standardizer::apply_rows(const Matrix& rows) const {
  if (rows.cols() != offset.size()) throw UsageError("standardize: dimension mismatch");
  Matrix out = rows.rowwise() - offset.transpose();
  for (Eigen::Index j = 0; j < out.cols(); ++j) out.col(j) /= scale(j);
  return out;
}

DualSolution solve_ocsvm_dual(const Matrix& x, double nu, double tol, std::size_t max_iter) {
  const auto n = x.rows();
  if (n < 2) throw FittingError("one-class SVM needs at least 2 training points");
  if (!(nu > 0.0 && nu <= 1.0)) throw ParameterError("nu must lie in (0, 1]");
  const double C = 1.0 / (nu * static_cast<double>(n));
  const double eps = 1e-12 * C;

  DualSolution s;
  s.alpha = Vector::Zero(n);
  double remaining = 1.0;
  for (Eigen::Index i = 0; i < n && remaining > 0.0; ++i) {
    s.alpha(i) = std::min(C, remaining);
    remaining -= s.alpha(i);
  }
  s.w = x.transpose() * s.alpha;
  Vector g = x * s.w;

  auto select = [&](Eigen::Index& up, Eigen::Index& low) {
    up = low = -1;
    for (Eigen::Index k = 0; k < n; ++k) {
      if (s.alpha(k) < C - eps && (up < 0 || g(k) < g(up))) up = k;
      if (s.alpha(k) > eps && (low < 0 || g(k) > g(low))) low = k;
    }
    return (up < 0 || low < 0) ? 0.0 : g(low) - g(up);
  };

  Eigen::Index i = -1, j = -1;
  double violation = select(i, j);
  while (violation > tol) {
    if (s.iterations >= max_iter)
      throw FittingError("one-class SVM did not converge in " + std::to_string(max_iter) +
                         " iterations (KKT violation " + std::to_string(violation) + ")");
    const Vector d = x.row(i).transpose() - x.row(j).transpose();
    const double dd = d.squaredNorm();
    const double bound = std::min(C - s.alpha(i), s.alpha(j));
    const double delta = dd > 0.0 ? std::min(bound, violation / dd) : bound;
    s.alpha(i) += delta;
    s.alpha(j) -= delta;
    if (s.alpha(j) < eps) s.alpha(j) = 0.0;
    if (s.alpha(i) > C - eps) s.alpha(i) = C;
    ++s.iterations;
    // Refresh w from alpha periodically so incremental updates cannot drift.
    if (s.iterations % 1000 == 0)
      s.w = x.transpose() * s.alpha;
    else
      s.w += delta * d;
    g.noalias() = x * s.w;
    violation = select(i, j);
  }
  s.w = x.transpose() * s.alpha;
  g.noalias() = x * s.w;
  s.kkt_violation = violation;
  s.objective = 0.5 * s.w.squaredNorm();

  std::vector<double> free;
  for (Eigen::Index k = 0; k < n; ++k)
    if (s.alpha(k) > eps && s.alpha(k) < C - eps) free.push_back(g(k));
  s.free_vectors = free.size();
  if (!free.empty()) {
    std::sort(free.begin(), free.end());
    const std::size_t m = free.size();
    s.rho = m % 2 ? free[m / 2] : 0.5 * (free[m / 2 - 1] + free[m / 2]);
  } else {
    // rho is only bracketed: between the largest g at the upper bound and the
    // smallest g at zero. Use the midpoint of the two boundary candidates.
    double lo = -std::numeric_limits<double>::infinity(), hi = std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < n; ++k) {
      if (s.alpha(k) >= C - eps) lo = std::max(lo, g(k));
      if (s.alpha(k) <= eps) hi = std::min(hi, g(k));
    }
    if (!std::isfinite(lo)) lo = hi;
    if (!std::isfinite(hi)) hi = lo;
    s.rho = 0.5 * (lo + hi);
    s.rho_from_bounds = true;
  }
  return s;
}

void OcSvmOptions::validate() const {
  if (!(nu > 0.0 && nu <= 1.0)) throw ParameterError("nu must lie in (0, 1]");
  if (!(tol > 0.0)) throw ParameterError("tol must be positive");
  if (max_iter == 0) throw ParameterError("max_iter must be positive");
}

OcSvmModel fit_ocsvm(const Matrix& features, const OcSvmOptions& options) {
  options.validate();
  const auto n = features.rows(), d = features.cols();
  if (n < 2) throw FittingError("one-class SVM needs at least 2 training points");
  if (options.anchor.size() != 0 && options.anchor.size() != d)
    throw UsageError("one-class SVM anchor dimension does not match the features");
  if (!features.allFinite()) throw FittingError("one-class SVM features contain non-finite values");

  OcSvmModel m;
  m.nu = options.nu;
  m.standardizer.offset = options.anchor.size() ? options.anchor : Vector::Zero(d);
  m.standardizer.scale = Vector::Ones(d);
  const Vector mean = features.colwise().mean();
  for (Eigen::Index j = 0; j < d; ++j) {
    const double var = (features.col(j).array() - mean(j)).square().sum() / static_cast<double>(n);
    const double sd = std::sqrt(var);
    if (sd > 1e-12 * std::max(1.0, std::abs(mean(j)))) {
      m.standardizer.scale(j) = sd;
    } else {
      m.standardizer.offset(j) = features(0, j);
    }
  }
  const auto sol = solve_ocsvm_dual(m.standardizer.apply_rows(features), options.nu, options.tol,
                                    options.max_iter);
  m.w = sol.w;
  m.rho = sol.rho;
  m.kkt_violation = sol.kkt_violation;
  m.iterations = sol.iterations;
  if (sol.rho_from_bounds)
    m.warnings.push_back("no free support vectors; rho taken from the boundary candidates");
  return m;
}

Score score(const OcSvmModel& model, const Eigen::Ref<const Vector>& z) {
  if (static_cast<std::size_t>(z.size()) != model.dim())
    throw UsageError("score: feature dimension " + std::to_string(z.size()) + " but model expects " +
                     std::to_string(model.dim()));
  Score s;
  s.value = model.w.dot(model.standardizer.apply(z)) - model.rho;
  s.anomaly = s.value < 0.0;
  return s;
}

std::vector<Score> score_rows(const OcSvmModel& model, const Matrix& rows) {
  std::vector<Score> out(static_cast<std::size_t>(rows.rows()));
  for (Eigen::Index i = 0; i < rows.rows(); ++i)
    out[static_cast<std::size_t>(i)] = score(model, rows.row(i).transpose());
  return out;
}

double AnomalyMap::anomaly_fraction() const {
  if (superpixels.empty()) return 0.0;
  const auto n = std::count_if(superpixels.begin(), superpixels.end(),
                               [](const SuperpixelResult& r) { return r.anomaly; });
  return static_cast<double>(n) / static_cast<double>(superpixels.size());
}

std::vector<PatchPair> volume_pairs(const PreparedVolume& volume, ModelPreset preset,
                                    std::uint32_t volume_index) {
  std::vector<PatchPair> pairs;
  for (std::size_t s = 0; s < volume.superpixels.size(); ++s)
    for (const auto& sp : volume.superpixels[s]) {
      if (!sp.in_retina) continue;
      const auto [r, c] = superpixel_center(sp, volume.image.height, volume.image.width);
      PatchPair p = extract_pair(volume.image, s, r, c, preset);
      p.source = {volume_index, static_cast<std::uint32_t>(s), sp.id};
      p.patient = volume_index;
      pairs.push_back(std::move(p));
    }
  return pairs;
}

AnomalyMap segment_volume(const OcSvmModel& model, const Embedder& embedder,
                          const PreparedVolume& volume, ModelPreset preset) {
  const auto pairs = volume_pairs(volume, preset);
  AnomalyMap map;
  map.width = volume.image.width;
  map.height = volume.image.height;
  map.slices = volume.image.slices;
  map.mask.assign(volume.image.voxels.size(), 0);
  map.labeled.assign(volume.image.voxels.size(), 0);
  if (pairs.empty()) return map;
  const auto scores = score_rows(model, embedder(pairs));
  const std::size_t plane = map.width * map.height;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& src = pairs[i].source;
    map.superpixels.push_back({src.slice, src.superpixel, scores[i].value, scores[i].anomaly});
    const auto& sp = volume.superpixels[src.slice][src.superpixel];
    for (auto p : sp.pixels) {
      map.labeled[src.slice * plane + p] = 1;
      map.mask[src.slice * plane + p] = scores[i].anomaly ? 1 : 0;
    }
  }
  return map;
}

}  // namespace anomkit
