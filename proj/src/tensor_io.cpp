#include "anomkit/tensor_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace anomkit {

namespace {
constexpr std::array<char, 4> kMagic{'N', 'C', 'T', '1'};

void require(std::istream& is, const char* what) {
  if (!is) throw FormatError(std::string("truncated stream while reading ") + what);
}
}  // namespace

void write_u8(std::ostream& os, std::uint8_t v) { os.put(static_cast<char>(v)); }

void write_u32(std::ostream& os, std::uint32_t v) {
  std::array<char, 4> b;
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(b.data(), 4);
}

void write_f32(std::ostream& os, float v) { write_u32(os, std::bit_cast<std::uint32_t>(v)); }

std::uint8_t read_u8(std::istream& is) {
  const int c = is.get();
  require(is, "u8");
  return static_cast<std::uint8_t>(c);
}

std::uint32_t read_u32(std::istream& is) {
  std::array<unsigned char, 4> b{};
  is.read(reinterpret_cast<char*>(b.data()), 4);
  require(is, "u32");
  return std::uint32_t{b[0]} | (std::uint32_t{b[1]} << 8) | (std::uint32_t{b[2]} << 16) |
         (std::uint32_t{b[3]} << 24);
}

float read_f32(std::istream& is) { return std::bit_cast<float>(read_u32(is)); }

void write_tensor(std::ostream& os, const Tensor& t) {
  if (t.rank() > 255) throw FormatError("tensor rank exceeds 255");
  os.write(kMagic.data(), kMagic.size());
  write_u8(os, static_cast<std::uint8_t>(t.rank()));
  for (std::size_t e : t.shape()) write_u32(os, static_cast<std::uint32_t>(e));
  for (float v : t.values()) write_f32(os, v);
}

Tensor read_tensor(std::istream& is) {
  std::array<char, 4> magic{};
  is.read(magic.data(), 4);
  require(is, "magic");
  if (magic != kMagic) throw FormatError("not an NCT1 tensor (bad magic)");
  const std::size_t rank = read_u8(is);
  Shape shape(rank);
  for (auto& e : shape) e = read_u32(is);
  std::vector<float> data(shape_numel(shape));
  for (auto& v : data) v = read_f32(is);
  return Tensor(std::move(shape), std::move(data));
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path.string() + " for writing");
  write_tensor(os, t);
  if (!os) throw FormatError("write failed for " + path.string());
}

Tensor load_tensor(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  return read_tensor(is);
}

}  // namespace anomkit
