#pragma once

#include <filesystem>
#include <iosfwd>

#include "anomkit/tensor.hpp"

namespace anomkit {

// NCT1 layout: "NCT1", u8 rank, rank x u32 extents (little-endian), then
// little-endian f32 values in row-major order.

void write_tensor(std::ostream& os, const Tensor& t);
Tensor read_tensor(std::istream& is);

void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

// Little-endian scalar helpers shared by the binary formats.
void write_u8(std::ostream& os, std::uint8_t v);
void write_u32(std::ostream& os, std::uint32_t v);
void write_f32(std::ostream& os, float v);
std::uint8_t read_u8(std::istream& is);
std::uint32_t read_u32(std::istream& is);
float read_f32(std::istream& is);

}  // namespace anomkit
