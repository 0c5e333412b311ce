// SPDX-License-Identifier: Apache-2.0
//
// Binary distilled-set file, all integers and floats little-endian:
//
//   "SDAR"  u32 version
//   u32 count  u32 classes  u32 channels  u32 height  u32 width
//   u8 label_mode (0 soft, 1 hard)  u8[3] zero
//   u32 metadata length  metadata bytes
//   f64 images[count*channels*height*width]  f64 labels[count*classes]  f64 inner_lr
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "softdistill/distill.hpp"

namespace softdistill {

inline constexpr std::uint32_t kArchiveVersion = 1;

struct DistilledArchive {
  std::uint32_t version = kArchiveVersion;
  LabelMode label_mode = LabelMode::kSoft;
  // Free-form provenance text (config echo, seed). Never a timestamp, so
  // identical runs give identical files.
  std::string metadata;
  DistilledSet set;
};

std::string encode_archive(const DistilledArchive& archive);
/// Throws DataError on a malformed file or an unsupported version.
DistilledArchive decode_archive(std::string_view bytes);

void save_archive(const std::filesystem::path& path, const DistilledArchive& archive);
DistilledArchive load_archive(const std::filesystem::path& path);

}  // namespace softdistill
