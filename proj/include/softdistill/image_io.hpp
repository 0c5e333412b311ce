// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace softdistill {

struct GrayImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;  // [0, 1], scaled by the file's max value
};

/// Binary (P5) or ASCII (P2) PGM with maxval up to 65535, or 8/16-bit
/// grayscale PNG. Chosen by file content, not extension. Throws DataError.
GrayImage read_image(const std::filesystem::path& path);

std::string encode_pgm8(std::size_t height, std::size_t width, std::span<const std::uint8_t> pixels);
std::string encode_png8(std::size_t height, std::size_t width, std::span<const std::uint8_t> pixels);

/// [0,1] values quantized to 8 bits and written as PNG when the extension is
/// .png, PGM otherwise.
void write_image(const std::filesystem::path& path, std::size_t height, std::size_t width,
                 std::span<const double> pixels);

/// Min-max scaling to [0,1]; a constant input maps to 0.5 everywhere.
std::vector<double> normalize_min_max(std::span<const double> values);
std::vector<std::uint8_t> quantize8(std::span<const double> unit_values);

/// Write through a sibling temp file and rename over the target.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

}  // namespace softdistill
