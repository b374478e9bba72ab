#include <cmath>

#include "anomkit/cluster.hpp"
#include "anomkit/errors.hpp"
#include "cluster_oracle.hpp"
#include "doctest.h"

using namespace anomkit;

namespace {

Matrix axis_centers(Eigen::Index k, Eigen::Index d) {
  Matrix c = Matrix::Zero(k, d);
  for (Eigen::Index i = 0; i < k; ++i) c(i, i) = 1.0;
  return c;
}

double angle_deg(const Vector& a, const Vector& b) {
  return std::acos(std::clamp(a.normalized().dot(b.normalized()), -1.0, 1.0)) * 180.0 / M_PI;
}

}  // namespace

TEST_CASE("Davies-Bouldin matches the brute-force definition") {
  Rng rng(11);
  for (int trial = 0; trial < 40; ++trial) {
    const auto n = static_cast<Eigen::Index>(6 + rng.below(45));
    const auto d = static_cast<Eigen::Index>(2 + rng.below(6));
    const std::size_t k = 2 + rng.below(4);
    Matrix x(n, d);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
    Rng km(trial);
    const auto res = spherical_kmeans(x, k, km, 2);
    std::vector<std::size_t> counts(k, 0);
    for (auto a : res.assignment) ++counts[a];
    if (std::find(counts.begin(), counts.end(), 0) != counts.end()) continue;
    CAPTURE(trial);
    CHECK(std::abs(davies_bouldin(x, res.assignment, res.centroids) -
                   oracle::davies_bouldin(x, res.assignment, res.centroids)) <= 1e-9);
  }
}

TEST_CASE("coincident centroids give an infinite index; empty clusters are rejected") {
  Matrix x(4, 2);
  x << 1, 0, 1, 0.1, 0, 1, 0.1, 1;
  Matrix c(2, 2);
  c << 1, 1, 2, 2;
  CHECK(std::isinf(davies_bouldin(x, {0, 0, 1, 1}, c)));
  CHECK_THROWS_AS(davies_bouldin(x, {0, 0, 0, 0}, c), UsageError);
}

TEST_CASE("the k-means objective never decreases") {
  Rng rng(12);
  Matrix x(300, 5);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  for (std::size_t k : {2u, 5u, 12u}) {
    Rng km(k);
    const auto res = spherical_kmeans(x, k, km, 3);
    for (std::size_t t = 1; t < res.objective_trace.size(); ++t)
      CHECK(res.objective_trace[t] >= res.objective_trace[t - 1] - 1e-9);
  }
}

TEST_CASE("select_k recovers three separated cones") {
  Rng rng(13);
  const Matrix x = oracle::cones(axis_centers(3, 8), 100, 0.08, rng);
  Rng sel(1);
  const auto model = select_k(x, sel);
  CHECK(model.k == 3);
  CHECK(model.db_trace.size() == 29);
  CHECK(model.db_trace.front().first == 2);
  CHECK(model.db_trace.back().first == 30);
}

TEST_CASE("two orthogonal clusters give centroids near the axes") {
  Rng rng(14);
  const Matrix x = oracle::cones(axis_centers(2, 2), 50, 0.03, rng);
  Rng km(3);
  const auto res = spherical_kmeans(x, 2, km);
  const Vector e1 = Vector::Unit(2, 0), e2 = Vector::Unit(2, 1);
  const Vector c0 = res.centroids.row(0).transpose(), c1 = res.centroids.row(1).transpose();
  const bool order = angle_deg(c0, e1) < angle_deg(c0, e2);
  CHECK(angle_deg(order ? c0 : c1, e1) <= 5.0);
  CHECK(angle_deg(order ? c1 : c0, e2) <= 5.0);
}

TEST_CASE("assignments are invariant to positive rescaling of each point") {
  Rng rng(15);
  const Matrix x = oracle::cones(axis_centers(3, 4), 30, 0.1, rng);
  Matrix scaled = x;
  for (Eigen::Index i = 0; i < x.rows(); ++i) scaled.row(i) *= 0.1 + static_cast<double>(i);
  Rng a(4), b(4);
  CHECK(spherical_kmeans(x, 3, a).assignment == spherical_kmeans(scaled, 3, b).assignment);
}

TEST_CASE("identical points collapse onto one effective centroid") {
  const Matrix x = Matrix::Ones(20, 3);
  Rng km(5);
  const auto res = spherical_kmeans(x, 4, km);
  for (auto a : res.assignment) CHECK(a == res.assignment[0]);
  CHECK(res.objective == doctest::Approx(20.0));
}

TEST_CASE("clustering is deterministic for a seed and independent of thread count") {
  Rng rng(16);
  const Matrix x = oracle::cones(axis_centers(4, 6), 40, 0.1, rng);
  SelectKOptions opt;
  opt.k_max = 10;
  Rng a(7), b(7);
  setenv("ANOMKIT_THREADS", "1", 1);
  const auto m1 = select_k(x, a, opt);
  setenv("ANOMKIT_THREADS", "3", 1);
  const auto m2 = select_k(x, b, opt);
  unsetenv("ANOMKIT_THREADS");
  CHECK(m1.k == m2.k);
  CHECK(m1.centroids == m2.centroids);
  CHECK(m1.db_trace == m2.db_trace);
}

TEST_CASE("zero vectors and invalid ranges are rejected") {
  Matrix x = Matrix::Ones(10, 2);
  x.row(3).setZero();
  Rng rng(1);
  CHECK_THROWS_AS(spherical_kmeans(x, 2, rng), InputError);
  CHECK_THROWS_AS(spherical_kmeans(Matrix::Ones(3, 2), 4, rng), ParameterError);
  CHECK_THROWS_AS(select_k(Matrix::Ones(30, 2), rng), ParameterError);
  ClusterModel m;
  m.centroids = Matrix::Identity(2, 2);
  m.k = 2;
  CHECK_THROWS_AS(assign(m, Vector::Zero(2)), InputError);
  Vector z(2);
  z << 1.0, 1.0;
  CHECK(assign(m, z) == 0);  // tie goes to the lowest id
  z << 0.2, 3.0;
  CHECK(assign(m, z) == 1);
}
