// SPDX-License-Identifier: Apache-2.0
//
// Image list: one tab-separated line per image,
//   <image path> <TAB> <label 0|1> <TAB> <mask path>
// Relative paths are taken relative to the manifest's directory. Blank lines
// and lines starting with '#' are skipped.
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "softdistill/patches.hpp"

namespace softdistill {

struct ManifestEntry {
  std::filesystem::path image;
  ImageLabel label = ImageLabel::kNonGastritis;
  std::filesystem::path mask;
};

/// Throws DataError naming the offending line.
std::vector<ManifestEntry> parse_manifest(const std::string& text,
                                          const std::filesystem::path& base_dir);
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

std::string format_manifest(const std::vector<ManifestEntry>& entries);

/// Reads every image and mask; masks are nonzero where the pixel is > 0.
std::vector<FullImage> load_manifest_images(const std::filesystem::path& path);

}  // namespace softdistill
