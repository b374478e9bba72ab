#pragma once

#include <utility>
#include <vector>

#include "anomkit/pca.hpp"
#include "anomkit/rng.hpp"

namespace anomkit {

struct KMeansResult {
  Matrix centroids;                 // k x d, unit rows
  std::vector<std::size_t> assignment;
  double objective = 0.0;           // sum of cosine similarities to own centroid
  std::vector<double> objective_trace;  // after every iteration of the best restart
  std::size_t iterations = 0;
};

/// Spherical k-means: k-means++-style seeding on cosine distance, best of `restarts`.
/// Throws InputError for zero feature vectors and ParameterError when k is not in [1, n].
KMeansResult spherical_kmeans(const Matrix& features, std::size_t k, Rng& rng,
                              std::size_t restarts = 5, std::size_t max_iter = 100);

/// Davies-Bouldin index with cosine distance for scatter and separation.
/// Coincident centroids (cosine distance <= 1e-12) give +infinity. Throws UsageError for an empty cluster.
double davies_bouldin(const Matrix& features, const std::vector<std::size_t>& assignment,
                      const Matrix& centroids);

struct ClusterModel {
  Matrix centroids;
  std::size_t k = 0;
  std::vector<std::pair<std::size_t, double>> db_trace;  // (k, DB) over the sweep
};

struct SelectKOptions {
  std::size_t k_min = 2, k_max = 30;
  std::size_t restarts = 5, max_iter = 100;
};

/// Runs spherical k-means for every k in the range (seeds derived from `rng` per k) and
/// keeps the lowest DB index; ties go to the smaller k.
ClusterModel select_k(const Matrix& features, Rng& rng, const SelectKOptions& options = {});

/// Nearest centroid by cosine similarity; ties go to the lowest id.
std::size_t assign(const ClusterModel& model, const Eigen::Ref<const Vector>& z);

}  // namespace anomkit
