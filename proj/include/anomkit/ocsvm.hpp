#pragma once

#include <functional>
#include <string>
#include <vector>

#include "anomkit/patches.hpp"
#include "anomkit/pca.hpp"
#include "anomkit/preprocess.hpp"

namespace anomkit {

/// standardize(x) = (x - offset) / scale, per dimension.
struct Standardizer {
  Vector offset, scale;

  Vector apply(const Eigen::Ref<const Vector>& x) const;
  Matrix apply_rows(const Matrix& rows) const;
};

/// Dual solution of min 1/2 |sum a_i x_i|^2 s.t. 0 <= a_i <= 1/(nu n), sum a_i = 1.
struct DualSolution {
  Vector alpha;
  Vector w;
  double rho = 0.0;
  double objective = 0.0;
  double kkt_violation = 0.0;
  std::size_t iterations = 0;
  std::size_t free_vectors = 0;
  bool rho_from_bounds = false;  // no free support vectors
};

/// Pairwise (SMO) descent on the maximal violating pair, starting from the first
/// floor(nu n) points at the upper bound. Throws FittingError on non-convergence.
DualSolution solve_ocsvm_dual(const Matrix& x, double nu, double tol, std::size_t max_iter);

struct OcSvmOptions {
  double nu = 0.1;
  double tol = 1e-6;
  std::size_t max_iter = 1'000'000;
  /// Origin of the feature space before scaling. Empty means the zero vector.
  Vector anchor;

  void validate() const;
};

struct OcSvmModel {
  Vector w;
  double rho = 0.0;
  double nu = 0.1;
  Standardizer standardizer;
  double kkt_violation = 0.0;
  std::size_t iterations = 0;
  std::vector<std::string> warnings;

  std::size_t dim() const { return static_cast<std::size_t>(w.size()); }
};

/// Standardizer: offset = anchor and scale = standard deviation for varying dimensions;
/// constant dimensions are mapped to 0 (offset = their value, scale 1).
OcSvmModel fit_ocsvm(const Matrix& features, const OcSvmOptions& options = {});

struct Score {
  bool anomaly = false;
  double value = 0.0;  // w . standardize(z) - rho; anomaly iff value < 0
};

Score score(const OcSvmModel& model, const Eigen::Ref<const Vector>& z);
std::vector<Score> score_rows(const OcSvmModel& model, const Matrix& rows);

/// Embeds a batch of patch pairs into feature rows.
using Embedder = std::function<Matrix(const std::vector<PatchPair>&)>;

struct SuperpixelResult {
  std::uint32_t slice = 0, superpixel = 0;
  double score = 0.0;
  bool anomaly = false;
};

struct AnomalyMap {
  std::size_t width = 0, height = 0, slices = 0;
  std::vector<SuperpixelResult> superpixels;  // in-retina only, (slice, id) order
  std::vector<std::uint8_t> mask;             // 1 = anomaly, voxel layout of the volume
  std::vector<std::uint8_t> labeled;          // 1 = pixel belongs to a scored superpixel

  double anomaly_fraction() const;
};

/// Pairs of every in-retina superpixel of one prepared volume, in (slice, id) order.
std::vector<PatchPair> volume_pairs(const PreparedVolume& volume, ModelPreset preset,
                                    std::uint32_t volume_index = 0);

AnomalyMap segment_volume(const OcSvmModel& model, const Embedder& embedder,
                          const PreparedVolume& volume, ModelPreset preset);

}  // namespace anomkit
