#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "anomkit/phantom.hpp"

namespace anomkit {

/// Writes every volume as OCTV + OCTG under <dir>/<split>/ and an index.json listing them.
void write_benchmark(const std::filesystem::path& dir, const Benchmark& bench, std::uint64_t seed,
                     const std::string& preset);

/// Loads one split ("healthy", "anomalous" or "test") listed in <dir>/index.json.
std::vector<Phantom> load_split(const std::filesystem::path& dir, const std::string& split);

}  // namespace anomkit
