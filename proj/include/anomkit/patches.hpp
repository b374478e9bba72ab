#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "anomkit/preprocess.hpp"
#include "anomkit/rng.hpp"
#include "anomkit/tensor.hpp"

namespace anomkit {

/// Model/patch scale. Desk halves the patch side of the paper-scale setup.
enum class ModelPreset { desk, paper };

ModelPreset parse_model_preset(const std::string& name);
const char* to_string(ModelPreset preset);

/// Patch side s; the wide second-scale crop is s x 4s before pooling.
std::size_t patch_side(ModelPreset preset);

struct PatchSource {
  std::uint32_t volume = 0, slice = 0, superpixel = 0;
  bool operator==(const PatchSource&) const = default;
};

struct PatchPair {
  Tensor scale1;  // [s, s, 1]
  Tensor scale2;  // [s, s, 1], 1x4 mean-pooled from an s x 4s crop
  PatchSource source;
  std::uint32_t patient = 0;
  std::size_t row = 0, col = 0;  // shared center pixel
};

enum class Split { healthy_train, anomaly_train, eval };

const char* to_string(Split split);

struct PatchDataset {
  Split split = Split::eval;
  std::vector<PatchPair> pairs;
};

/// Crops both scales around `center` with edge replication at the borders.
/// Rows [r - s/2, r - s/2 + s); scale-2 cols [c - 2s, c + 2s) pooled by 4.
PatchPair extract_pair(const Volume& volume, std::size_t slice, std::size_t row, std::size_t col,
                       ModelPreset preset);

/// Center pixel of a superpixel: its rounded centroid.
std::pair<std::size_t, std::size_t> superpixel_center(const Superpixel& sp, std::size_t rows,
                                                      std::size_t cols);

struct DatasetOptions {
  std::optional<std::size_t> cap;  // uniform subsample to at most this many pairs
  std::vector<std::uint32_t> patients;  // per volume; defaults to the volume index
};

/// One pair per in-retina superpixel, ordered by (volume, slice, superpixel id).
/// Throws EmptyDatasetError when no superpixel is in the retina.
PatchDataset build_dataset(const std::vector<const PreparedVolume*>& volumes, Split split,
                           ModelPreset preset, Rng& rng, const DatasetOptions& options = {});

}  // namespace anomkit
