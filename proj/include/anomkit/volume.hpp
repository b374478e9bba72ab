#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace anomkit {

/// Single B-scan, row-major [row][col].
struct Image {
  std::size_t rows = 0, cols = 0;
  std::vector<float> px;

  Image() = default;
  Image(std::size_t r, std::size_t c, float fill = 0.0f) : rows(r), cols(c), px(r * c, fill) {}

  float& at(std::size_t r, std::size_t c) { return px[r * cols + c]; }
  float at(std::size_t r, std::size_t c) const { return px[r * cols + c]; }
  bool operator==(const Image&) const = default;
};

/// Intensity volume stored slice-major: [slice][row][col].
struct Volume {
  std::size_t width = 0, height = 0, slices = 0;
  std::vector<float> voxels;

  Volume() = default;
  Volume(std::size_t w, std::size_t h, std::size_t s, float fill = 0.0f)
      : width(w), height(h), slices(s), voxels(w * h * s, fill) {}

  std::size_t index(std::size_t s, std::size_t r, std::size_t c) const {
    return (s * height + r) * width + c;
  }
  float& at(std::size_t s, std::size_t r, std::size_t c) { return voxels[index(s, r, c)]; }
  float at(std::size_t s, std::size_t r, std::size_t c) const { return voxels[index(s, r, c)]; }

  Image slice(std::size_t s) const;
  void set_slice(std::size_t s, const Image& img);
  bool operator==(const Volume&) const = default;
};

enum class AnomalyType : std::uint8_t {
  none = 0,
  cyst_blob = 1,
  subsurface_fluid = 2,
  surface_deformation = 3,
};

const char* to_string(AnomalyType t);

/// Per-column row index of a surface, indexed [slice][col].
struct SurfaceMap {
  std::size_t width = 0, slices = 0;
  std::vector<int> rows;

  SurfaceMap() = default;
  SurfaceMap(std::size_t w, std::size_t s, int fill = 0) : width(w), slices(s), rows(w * s, fill) {}
  int& at(std::size_t s, std::size_t c) { return rows[s * width + c]; }
  int at(std::size_t s, std::size_t c) const { return rows[s * width + c]; }
  bool operator==(const SurfaceMap&) const = default;
};

struct GroundTruth {
  std::size_t width = 0, height = 0, slices = 0;
  std::vector<AnomalyType> labels;  // same layout as Volume::voxels
  SurfaceMap top, bottom;

  AnomalyType at(std::size_t s, std::size_t r, std::size_t c) const {
    return labels[(s * height + r) * width + c];
  }
  bool anomalous(std::size_t s, std::size_t r, std::size_t c) const {
    return at(s, r, c) != AnomalyType::none;
  }
  std::size_t anomaly_count() const;
  bool operator==(const GroundTruth&) const = default;
};

// OCTV: "OCTV", u32 width, height, slices, then f32 voxels slice-major.
void save_volume(const std::filesystem::path& path, const Volume& v);
Volume load_volume(const std::filesystem::path& path);

// OCTG: "OCTG", u32 width, height, slices, u8 labels (voxel layout), then
// u32 top and u32 bottom surface rows per (slice, col).
void save_ground_truth(const std::filesystem::path& path, const GroundTruth& gt);
GroundTruth load_ground_truth(const std::filesystem::path& path);

}  // namespace anomkit
