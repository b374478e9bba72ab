#include "anomkit/volume.hpp"

#include <algorithm>
#include <array>
#include <fstream>

#include "anomkit/errors.hpp"
#include "anomkit/tensor_io.hpp"

namespace anomkit {

Image Volume::slice(std::size_t s) const {
  Image img(height, width);
  std::copy_n(voxels.begin() + static_cast<std::ptrdiff_t>(s * height * width), height * width,
              img.px.begin());
  return img;
}

void Volume::set_slice(std::size_t s, const Image& img) {
  if (img.rows != height || img.cols != width) throw DimensionError("set_slice: size mismatch");
  std::copy(img.px.begin(), img.px.end(),
            voxels.begin() + static_cast<std::ptrdiff_t>(s * height * width));
}

const char* to_string(AnomalyType t) {
  switch (t) {
    case AnomalyType::none: return "none";
    case AnomalyType::cyst_blob: return "cyst_blob";
    case AnomalyType::subsurface_fluid: return "subsurface_fluid";
    case AnomalyType::surface_deformation: return "surface_deformation";
  }
  return "?";
}

std::size_t GroundTruth::anomaly_count() const {
  return static_cast<std::size_t>(std::count_if(
      labels.begin(), labels.end(), [](AnomalyType t) { return t != AnomalyType::none; }));
}

namespace {

void write_magic(std::ostream& os, const char* magic) { os.write(magic, 4); }

void expect_magic(std::istream& is, const char* magic, const std::filesystem::path& path) {
  std::array<char, 4> m{};
  is.read(m.data(), 4);
  if (!is || !std::equal(m.begin(), m.end(), magic)) {
    throw FormatError(path.string() + ": expected magic " + std::string(magic, 4));
  }
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path.string() + " for writing");
  return os;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  return is;
}

}  // namespace

void save_volume(const std::filesystem::path& path, const Volume& v) {
  auto os = open_out(path);
  write_magic(os, "OCTV");
  write_u32(os, static_cast<std::uint32_t>(v.width));
  write_u32(os, static_cast<std::uint32_t>(v.height));
  write_u32(os, static_cast<std::uint32_t>(v.slices));
  for (float x : v.voxels) write_f32(os, x);
  if (!os) throw FormatError("write failed for " + path.string());
}

Volume load_volume(const std::filesystem::path& path) {
  auto is = open_in(path);
  expect_magic(is, "OCTV", path);
  const std::size_t w = read_u32(is), h = read_u32(is), s = read_u32(is);
  Volume v(w, h, s);
  for (float& x : v.voxels) x = read_f32(is);
  return v;
}

void save_ground_truth(const std::filesystem::path& path, const GroundTruth& gt) {
  auto os = open_out(path);
  write_magic(os, "OCTG");
  write_u32(os, static_cast<std::uint32_t>(gt.width));
  write_u32(os, static_cast<std::uint32_t>(gt.height));
  write_u32(os, static_cast<std::uint32_t>(gt.slices));
  for (AnomalyType t : gt.labels) write_u8(os, static_cast<std::uint8_t>(t));
  for (int r : gt.top.rows) write_u32(os, static_cast<std::uint32_t>(r));
  for (int r : gt.bottom.rows) write_u32(os, static_cast<std::uint32_t>(r));
  if (!os) throw FormatError("write failed for " + path.string());
}

GroundTruth load_ground_truth(const std::filesystem::path& path) {
  auto is = open_in(path);
  expect_magic(is, "OCTG", path);
  GroundTruth gt;
  gt.width = read_u32(is);
  gt.height = read_u32(is);
  gt.slices = read_u32(is);
  gt.labels.resize(gt.width * gt.height * gt.slices);
  for (auto& t : gt.labels) {
    const std::uint8_t b = read_u8(is);
    if (b > 3) throw FormatError(path.string() + ": invalid label " + std::to_string(b));
    t = static_cast<AnomalyType>(b);
  }
  gt.top = SurfaceMap(gt.width, gt.slices);
  gt.bottom = SurfaceMap(gt.width, gt.slices);
  for (int& r : gt.top.rows) r = static_cast<int>(read_u32(is));
  for (int& r : gt.bottom.rows) r = static_cast<int>(read_u32(is));
  return gt;
}

}  // namespace anomkit
