#include "anomkit/baseline_pca.hpp"

#include <string>

#include "anomkit/errors.hpp"
#include "anomkit/parallel.hpp"

namespace anomkit {

std::size_t fixed_components(ModelPreset preset) {
  return preset == ModelPreset::desk ? 16 : 128;
}

Matrix patch_matrix(const std::vector<PatchPair>& pairs, int scale) {
  if (pairs.empty()) throw EmptyDatasetError("patch_matrix: no pairs");
  const auto& first = scale == 1 ? pairs[0].scale1 : pairs[0].scale2;
  Matrix m(static_cast<Eigen::Index>(pairs.size()), static_cast<Eigen::Index>(first.size()));
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& t = scale == 1 ? pairs[i].scale1 : pairs[i].scale2;
    if (t.size() != first.size()) throw DimensionError("patch_matrix: mixed patch sizes");
    for (std::size_t j = 0; j < t.size(); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = t[j];
  }
  return m;
}

PcaBaseline fit_pca_baseline(const PatchDataset& dataset, PcaMode mode, ModelPreset preset) {
  const std::size_t n = dataset.pairs.size();
  const std::size_t k = fixed_components(preset);
  if (mode == PcaMode::fixed_k && n < k)
    throw FittingError("PCA baseline needs at least " + std::to_string(k) + " samples, got " +
                       std::to_string(n));
  if (n < 2) throw FittingError("PCA baseline needs at least 2 samples");
  const double value = mode == PcaMode::fixed_k ? static_cast<double>(k) : kVarianceFraction;
  PcaBaseline b;
  b.mode = mode;
  b.preset = preset;
  b.scale1 = pca_fit(patch_matrix(dataset.pairs, 1), mode, value);
  b.scale2 = pca_fit(patch_matrix(dataset.pairs, 2), mode, value);
  return b;
}

namespace {

Vector as_vector(const Tensor& t) {
  Vector v(static_cast<Eigen::Index>(t.size()));
  for (std::size_t i = 0; i < t.size(); ++i) v(static_cast<Eigen::Index>(i)) = t[i];
  return v;
}

}  // namespace

std::vector<double> embed(const PcaBaseline& baseline, const PatchPair& pair) {
  if (pair.scale1.size() != static_cast<std::size_t>(baseline.scale1.mean.size()) ||
      pair.scale2.size() != static_cast<std::size_t>(baseline.scale2.mean.size()))
    throw UsageError("PCA embed: patch size does not match the fitted baseline");
  const Vector a = pca_project(baseline.scale1, as_vector(pair.scale1));
  const Vector b = pca_project(baseline.scale2, as_vector(pair.scale2));
  std::vector<double> out(a.data(), a.data() + a.size());
  out.insert(out.end(), b.data(), b.data() + b.size());
  return out;
}

Matrix embed(const PcaBaseline& baseline, const std::vector<PatchPair>& pairs) {
  Matrix z(static_cast<Eigen::Index>(pairs.size()), static_cast<Eigen::Index>(baseline.dim()));
  parallel_for(pairs.size(), [&](std::size_t i) {
    const auto e = embed(baseline, pairs[i]);
    for (std::size_t j = 0; j < e.size(); ++j)
      z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = e[j];
  });
  return z;
}

}  // namespace anomkit
