#pragma once

#include <vector>

#include "anomkit/patches.hpp"
#include "anomkit/pca.hpp"

namespace anomkit {

/// Per-scale PCA embeddings, concatenated (scale1 then scale2).
struct PcaBaseline {
  PcaMode mode = PcaMode::fixed_k;
  ModelPreset preset = ModelPreset::desk;
  PcaModel scale1, scale2;

  std::size_t dim() const { return scale1.dim() + scale2.dim(); }
};

/// Components kept per scale in fixed mode: 16 (desk) or 128 (paper).
std::size_t fixed_components(ModelPreset preset);
inline constexpr double kVarianceFraction = 0.95;

/// Fits PCA independently per scale on the flattened patches.
/// Throws FittingError when there are fewer samples than requested components.
PcaBaseline fit_pca_baseline(const PatchDataset& dataset, PcaMode mode, ModelPreset preset);

std::vector<double> embed(const PcaBaseline& baseline, const PatchPair& pair);
/// One embedding row per pair, computed in parallel.
Matrix embed(const PcaBaseline& baseline, const std::vector<PatchPair>& pairs);

/// Flattened patches of one scale, one row per pair.
Matrix patch_matrix(const std::vector<PatchPair>& pairs, int scale);

}  // namespace anomkit
