#pragma once

#include <filesystem>
#include <string>

#include "anomkit/pipeline.hpp"

namespace anomkit {

inline constexpr int kBundleFormatVersion = 1;

/// Writes manifest.json plus NCT1 tensor files per stage (dcae, pca_fixed, pca_var, ocsvm_*,
/// cluster). The bundle is assembled in a sibling temporary directory and moved into place,
/// so a failure never leaves a partial bundle behind.
void save_bundle(const std::filesystem::path& dir, const Models& models);

/// Verifies every file checksum against the manifest. Throws FormatError on mismatch.
Models load_bundle(const std::filesystem::path& dir);

/// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

/// Exclusive lock held as `<dir>.lock` for the lifetime of the object.
class BundleLock {
 public:
  explicit BundleLock(const std::filesystem::path& dir);
  ~BundleLock();
  BundleLock(const BundleLock&) = delete;
  BundleLock& operator=(const BundleLock&) = delete;

 private:
  std::filesystem::path path_;
};

}  // namespace anomkit
