#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "anomkit/volume.hpp"

namespace anomkit {

/// How many anomalies of one type to place and how large they are (full extents in px;
/// depth is the half-extent in slices around the center slice).
struct AnomalySpec {
  AnomalyType type = AnomalyType::cyst_blob;
  std::size_t count_min = 1, count_max = 1;
  double width_min = 10, width_max = 10;
  double height_min = 6, height_max = 6;
  std::size_t depth_min = 1, depth_max = 2;
};

struct PhantomConfig {
  std::size_t width = 128, height = 128, slices = 8;

  // Retinal layers from top to bottom; the last one is the bright bottom band.
  std::vector<double> layer_intensities{0.7, 0.5, 0.3, 0.6, 0.2, 0.8, 0.95};
  std::vector<double> layer_fractions{0.12, 0.16, 0.12, 0.1, 0.26, 0.12, 0.12};
  double layer_jitter = 0.03;  // per-volume uniform jitter of each layer intensity
  double vitreous_intensity = 0.03;
  double choroid_intensity = 0.35;

  double top_row = 40.0;       // mean row of the top surface
  double thickness = 50.0;     // mean retina thickness in rows
  double top_jitter = 5.0;     // per-volume offset range of the top surface (+/- px)
  double thickness_jitter = 0.1;

  std::size_t control_points = 6;  // boundary spline knots across the width
  double amplitude = 5.0;          // boundary undulation (+/- px)

  double speckle = 0.4;        // multiplicative uniform noise: v * (1 + speckle * U(-1, 1))
  double gain_jitter = 0.15;   // per-volume global gain in [1 - g, 1 + g]

  double cyst_intensity = 0.06;
  double fluid_intensity = 0.1;

  std::vector<AnomalySpec> anomalies;
  std::size_t max_retries = 200;
  std::uint64_t seed = 0;

  /// Throws ParameterError when the config violates its invariants.
  void validate() const;
};

struct Phantom {
  Volume volume;
  GroundTruth truth;
};

/// Renders one layered volume with its ground truth.
/// Throws GenerationError when an anomaly cannot be placed within max_retries.
Phantom generate_volume(const PhantomConfig& config);

enum class PhantomPreset { desk, paper_shape };

PhantomConfig preset_config(PhantomPreset preset);
PhantomPreset parse_phantom_preset(const std::string& name);

struct BenchmarkConfig {
  PhantomConfig base;
  std::size_t n_healthy = 40, n_anomalous = 40, n_test = 8;
  std::vector<AnomalySpec> mixed_anomalies;  // anomaly split
  std::vector<AnomalySpec> test_anomalies;   // test split
  std::uint64_t seed = 42;
};

BenchmarkConfig default_benchmark_config(PhantomPreset preset = PhantomPreset::desk,
                                         std::uint64_t seed = 42);

struct Benchmark {
  std::vector<Phantom> healthy, anomalous, test;
};

/// Per-volume seeds are seed XOR (split offset + index), so volumes are independent
/// of generation order.
Benchmark generate_benchmark(const BenchmarkConfig& config);
Benchmark generate_benchmark(std::uint64_t seed);

std::uint64_t volume_seed(std::uint64_t seed, std::size_t split, std::size_t index);

/// Voxels between the true top and bottom surfaces (inclusive).
std::size_t retina_voxel_count(const GroundTruth& truth);

}  // namespace anomkit
