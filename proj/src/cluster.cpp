#include "anomkit/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "anomkit/errors.hpp"
#include "anomkit/parallel.hpp"

namespace anomkit {

namespace {

Matrix normalized_rows(const Matrix& x) {
  Matrix u = x;
  for (Eigen::Index i = 0; i < u.rows(); ++i) {
    const double n = u.row(i).norm();
    if (!(n > 0.0) || !std::isfinite(n))
      throw InputError("clustering input row " + std::to_string(i) + " is a zero or non-finite vector");
    u.row(i) /= n;
  }
  return u;
}

std::size_t argmax_row(const Eigen::Ref<const Vector>& sims) {
  Eigen::Index best = 0;
  for (Eigen::Index j = 1; j < sims.size(); ++j)
    if (sims(j) > sims(best)) best = j;
  return static_cast<std::size_t>(best);
}

// Seeds k centroids: first uniformly, then proportional to squared cosine distance.
Matrix seed_centroids(const Matrix& u, std::size_t k, Rng& rng) {
  const auto n = u.rows();
  Matrix c(static_cast<Eigen::Index>(k), u.cols());
  c.row(0) = u.row(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n))));
  Vector dist = (1.0 - (u * c.row(0).transpose()).array()).max(0.0).matrix();
  for (std::size_t m = 1; m < k; ++m) {
    const double total = dist.squaredNorm();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      double r = rng.uniform() * total;
      pick = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        r -= dist(i) * dist(i);
        if (r < 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
    }
    c.row(static_cast<Eigen::Index>(m)) = u.row(pick);
    const Vector d = (1.0 - (u * u.row(pick).transpose()).array()).max(0.0).matrix();
    dist = dist.cwiseMin(d);
  }
  return c;
}

KMeansResult run_once(const Matrix& u, std::size_t k, Rng& rng, std::size_t max_iter) {
  const auto n = u.rows();
  KMeansResult r;
  r.centroids = seed_centroids(u, k, rng);
  r.assignment.assign(static_cast<std::size_t>(n), k);  // k = unassigned
  for (std::size_t it = 0; it < max_iter; ++it) {
    // Assignment step.
    const Matrix sims = u * r.centroids.transpose();
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      const std::size_t a = argmax_row(sims.row(i).transpose());
      changed = changed || a != r.assignment[static_cast<std::size_t>(i)];
      r.assignment[static_cast<std::size_t>(i)] = a;
    }
    // Update step: normalized member means, accumulated in index order.
    Matrix sum = Matrix::Zero(static_cast<Eigen::Index>(k), u.cols());
    std::vector<std::size_t> count(k, 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sum.row(static_cast<Eigen::Index>(r.assignment[static_cast<std::size_t>(i)])) += u.row(i);
      ++count[r.assignment[static_cast<std::size_t>(i)]];
    }
    for (std::size_t j = 0; j < k; ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      if (count[j] == 0) {
        // Re-seed at the point worst represented by its own centroid, unless every
        // point already coincides with its centroid (nothing left to split).
        Eigen::Index worst = -1;
        double worst_sim = 1.0 - 1e-12;
        for (Eigen::Index i = 0; i < n; ++i) {
          const std::size_t a = r.assignment[static_cast<std::size_t>(i)];
          if (count[a] <= 1) continue;
          const double s = u.row(i).dot(r.centroids.row(static_cast<Eigen::Index>(a)));
          if (s < worst_sim) {
            worst_sim = s;
            worst = i;
          }
        }
        if (worst < 0) continue;
        const std::size_t old = r.assignment[static_cast<std::size_t>(worst)];
        sum.row(static_cast<Eigen::Index>(old)) -= u.row(worst);
        --count[old];
        r.assignment[static_cast<std::size_t>(worst)] = j;
        sum.row(jj) = u.row(worst);
        count[j] = 1;
        changed = true;
      }
    }
    for (std::size_t j = 0; j < k; ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      const double norm = sum.row(jj).norm();
      if (count[j] > 0 && norm > 0.0) r.centroids.row(jj) = sum.row(jj) / norm;
    }
    r.objective = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      r.objective += u.row(i).dot(
          r.centroids.row(static_cast<Eigen::Index>(r.assignment[static_cast<std::size_t>(i)])));
    r.objective_trace.push_back(r.objective);
    r.iterations = it + 1;
    if (!changed) break;
  }
  return r;
}

}  // namespace

KMeansResult spherical_kmeans(const Matrix& features, std::size_t k, Rng& rng,
                              std::size_t restarts, std::size_t max_iter) {
  if (k < 1 || k > static_cast<std::size_t>(features.rows()))
    throw ParameterError("spherical k-means needs 1 <= k <= n (k = " + std::to_string(k) +
                         ", n = " + std::to_string(features.rows()) + ")");
  if (restarts < 1 || max_iter < 1) throw ParameterError("restarts and max_iter must be positive");
  const Matrix u = normalized_rows(features);
  KMeansResult best;
  for (std::size_t r = 0; r < restarts; ++r) {
    Rng run_rng = rng.derive(r);
    auto res = run_once(u, k, run_rng, max_iter);
    if (r == 0 || res.objective > best.objective) best = std::move(res);
  }
  rng.next_u64();
  return best;
}

double davies_bouldin(const Matrix& features, const std::vector<std::size_t>& assignment,
                      const Matrix& centroids) {
  const auto k = static_cast<std::size_t>(centroids.rows());
  if (assignment.size() != static_cast<std::size_t>(features.rows()))
    throw UsageError("davies_bouldin: one assignment per feature row required");
  const Matrix u = normalized_rows(features);
  const Matrix c = normalized_rows(centroids);
  std::vector<double> scatter(k, 0.0);
  std::vector<std::size_t> count(k, 0);
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    const std::size_t a = assignment[i];
    if (a >= k) throw UsageError("davies_bouldin: assignment out of range");
    scatter[a] += 1.0 - u.row(static_cast<Eigen::Index>(i)).dot(c.row(static_cast<Eigen::Index>(a)));
    ++count[a];
  }
  for (std::size_t j = 0; j < k; ++j) {
    if (count[j] == 0) throw UsageError("davies_bouldin: cluster " + std::to_string(j) + " is empty");
    scatter[j] /= static_cast<double>(count[j]);
  }
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    double worst = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      if (i == j) continue;
      const double d = 1.0 - c.row(static_cast<Eigen::Index>(i)).dot(c.row(static_cast<Eigen::Index>(j)));
      const double ratio = d > 1e-12 ? (scatter[i] + scatter[j]) / d
                                   : std::numeric_limits<double>::infinity();
      worst = std::max(worst, ratio);
    }
    total += worst;
  }
  return total / static_cast<double>(k);
}

ClusterModel select_k(const Matrix& features, Rng& rng, const SelectKOptions& options) {
  if (options.k_min < 2 || options.k_max < options.k_min)
    throw ParameterError("select_k needs 2 <= k_min <= k_max");
  if (static_cast<std::size_t>(features.rows()) <= options.k_max)
    throw ParameterError("select_k needs more samples (" + std::to_string(features.rows()) +
                         ") than the largest k (" + std::to_string(options.k_max) + ")");
  const std::size_t count = options.k_max - options.k_min + 1;
  const std::uint64_t base = rng.next_u64();
  std::vector<KMeansResult> runs(count);
  std::vector<double> db(count);
  parallel_for(count, [&](std::size_t idx) {
    const std::size_t k = options.k_min + idx;
    Rng run_rng = Rng(base).derive(k);
    runs[idx] = spherical_kmeans(features, k, run_rng, options.restarts, options.max_iter);
    // Clusters left empty (all points identical) cannot be scored: treat as degenerate.
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t a : runs[idx].assignment) ++counts[a];
    const bool empty = std::find(counts.begin(), counts.end(), 0) != counts.end();
    db[idx] = empty ? std::numeric_limits<double>::infinity()
                    : davies_bouldin(features, runs[idx].assignment, runs[idx].centroids);
  });
  ClusterModel model;
  std::size_t best = 0;
  for (std::size_t idx = 0; idx < count; ++idx) {
    model.db_trace.emplace_back(options.k_min + idx, db[idx]);
    if (db[idx] < db[best]) best = idx;
  }
  model.k = options.k_min + best;
  model.centroids = runs[best].centroids;
  return model;
}

std::size_t assign(const ClusterModel& model, const Eigen::Ref<const Vector>& z) {
  if (z.size() != model.centroids.cols()) throw UsageError("assign: feature dimension mismatch");
  const double n = z.norm();
  if (!(n > 0.0)) throw InputError("assign: zero feature vector");
  const Vector sims = model.centroids * (z / n);
  return argmax_row(sims);
}

}  // namespace anomkit
