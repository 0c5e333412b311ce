// SPDX-License-Identifier: Apache-2.0
#include "softdistill/manifest.hpp"

#include <sstream>

#include "softdistill/errors.hpp"
#include "softdistill/image_io.hpp"

namespace softdistill {

namespace fs = std::filesystem;

std::vector<ManifestEntry> parse_manifest(const std::string& text, const fs::path& base_dir) {
  std::vector<ManifestEntry> entries;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;

    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const std::size_t tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    const std::string where = "manifest line " + std::to_string(line_no);
    if (fields.size() != 3) {
      throw DataError(where + ": expected 3 tab-separated fields, got " +
                      std::to_string(fields.size()));
    }
    if (fields[0].empty() || fields[2].empty()) throw DataError(where + ": empty path");
    ManifestEntry entry;
    if (fields[1] == "0") {
      entry.label = ImageLabel::kNonGastritis;
    } else if (fields[1] == "1") {
      entry.label = ImageLabel::kGastritis;
    } else {
      throw DataError(where + ": label must be 0 or 1, got '" + fields[1] + "'");
    }
    entry.image = fs::path(fields[0]).is_absolute() ? fs::path(fields[0]) : base_dir / fields[0];
    entry.mask = fs::path(fields[2]).is_absolute() ? fs::path(fields[2]) : base_dir / fields[2];
    entries.push_back(std::move(entry));
  }
  if (entries.empty()) throw DataError("manifest lists no images");
  return entries;
}

std::vector<ManifestEntry> read_manifest(const fs::path& path) {
  return parse_manifest(read_file(path), path.parent_path());
}

std::string format_manifest(const std::vector<ManifestEntry>& entries) {
  std::string out;
  for (const ManifestEntry& e : entries) {
    out += e.image.generic_string() + '\t' + (e.label == ImageLabel::kGastritis ? "1" : "0") +
           '\t' + e.mask.generic_string() + '\n';
  }
  return out;
}

std::vector<FullImage> load_manifest_images(const fs::path& path) {
  std::vector<FullImage> images;
  for (const ManifestEntry& entry : read_manifest(path)) {
    GrayImage pixels = read_image(entry.image);
    const GrayImage mask = read_image(entry.mask);
    if (mask.height != pixels.height || mask.width != pixels.width) {
      throw DataError(entry.mask.string() + ": mask size differs from " + entry.image.string());
    }
    FullImage img;
    img.height = pixels.height;
    img.width = pixels.width;
    img.pixels = std::move(pixels.pixels);
    img.mask.resize(mask.pixels.size());
    for (std::size_t i = 0; i < mask.pixels.size(); ++i) img.mask[i] = mask.pixels[i] > 0.0 ? 1 : 0;
    img.label = entry.label;
    img.id = entry.image.filename().string();
    images.push_back(std::move(img));
  }
  return images;
}

}  // namespace softdistill
