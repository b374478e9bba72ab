#pragma once

#include <cstdint>
#include <vector>

#include "anomkit/volume.hpp"

namespace anomkit {

/// Top and bottom retina surfaces as row indices per (slice, col).
/// `top` is the first retina row, `bottom` the last (inclusive).
struct SurfacePair {
  SurfaceMap top, bottom;
  bool operator==(const SurfacePair&) const = default;
};

struct Superpixel {
  std::uint32_t id = 0;
  std::uint32_t slice = 0;
  std::vector<std::uint32_t> pixels;  // flat row * cols + col within the slice
  double centroid_row = 0.0, centroid_col = 0.0;
  bool in_retina = false;
};

struct PreprocessConfig {
  int smoothness = 2;         // max surface change between adjacent columns (px)
  int min_thickness = 6;      // minimum rows between top and bottom
  double target_area = 16.0;  // mean superpixel area (px^2)
  double compactness = 0.25;  // SLIC m, in normalized intensity units
  int slic_iterations = 10;
  double low_percentile = 0.01, high_percentile = 0.99;

  void validate() const;
};

/// Per slice: minimum-cost smooth paths (dynamic programming across columns) on a
/// vertical gradient cost image. Throws SegmentationError when a slice has no
/// gradient evidence or no admissible path.
SurfacePair segment_surfaces(const Volume& volume, const PreprocessConfig& config = {});

struct Flattened {
  Volume volume;
  SurfacePair surfaces;     // in flattened coordinates
  std::vector<int> shifts;  // downward shift per (slice, col)
  int reference_row = 0;    // common bottom row after flattening
};

/// Shifts every column down so its bottom surface lands on the largest bottom row.
/// Vacated voxels become 0.
Flattened flatten(const Volume& volume, const SurfacePair& surfaces);

/// Applies per-column shifts (as produced by flatten) to a voxel-aligned label grid.
template <typename T>
std::vector<T> shift_columns(const std::vector<T>& grid, std::size_t width, std::size_t height,
                             std::size_t slices, const std::vector<int>& shifts, T fill);

/// Maps the low/high intensity percentiles inside `retina_mask` to 0/1 and clamps.
/// A slice without spread maps to 0.5 everywhere.
Image normalize_slice(const Image& slice, const std::vector<std::uint8_t>& retina_mask,
                      double low = 0.01, double high = 0.99);

/// SLIC over (intensity, row, col), grid-initialized, followed by connectivity
/// enforcement. Ids follow grid order; the result partitions the slice.
std::vector<Superpixel> slic_superpixels(const Image& slice, double target_area,
                                         double compactness, int iterations = 10,
                                         std::uint32_t slice_index = 0);

/// in_retina <=> top <= centroid row <= bottom at the centroid column (flattened coords).
void mark_retina(std::vector<Superpixel>& superpixels, const SurfacePair& surfaces);

/// Superpixel label image (id per pixel) of one slice.
std::vector<std::uint32_t> label_image(const std::vector<Superpixel>& superpixels,
                                       std::size_t rows, std::size_t cols);

struct PreparedVolume {
  Volume image;  // flattened and normalized
  SurfacePair surfaces;
  std::vector<int> shifts;
  int reference_row = 0;
  std::vector<std::vector<Superpixel>> superpixels;  // per slice

  std::size_t in_retina_count() const;
};

/// segment -> flatten -> normalize each slice -> superpixels -> retina marking.
PreparedVolume preprocess_volume(const Volume& volume, const PreprocessConfig& config = {});

/// Ground-truth labels brought into the flattened frame of `prepared`.
std::vector<AnomalyType> flatten_labels(const GroundTruth& truth, const PreparedVolume& prepared);

}  // namespace anomkit
