// SPDX-License-Identifier: Apache-2.0
#include "softdistill/archive.hpp"

#include <bit>
#include <cstring>
#include <limits>

#include "softdistill/errors.hpp"
#include "softdistill/image_io.hpp"

namespace softdistill {

namespace {

constexpr char kMagic[4] = {'S', 'D', 'A', 'R'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}

  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw DataError("archive: truncated file");
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(in_[pos_++]);
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string_view take(std::size_t n) {
    need(n);
    const std::string_view s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  std::string_view in_;
  std::size_t pos_ = 0;
};

std::uint32_t narrow(std::size_t v, const char* what) {
  if (v > std::numeric_limits<std::uint32_t>::max()) {
    throw DataError(std::string("archive: ") + what + " too large");
  }
  return static_cast<std::uint32_t>(v);
}

}  // namespace

std::string encode_archive(const DistilledArchive& archive) {
  const DistilledSet& d = archive.set;
  const Shape& s = d.images.shape();
  if (s.size() != 4) throw ShapeError("archive: images must be (M, C, H, W), got " + to_string(s));
  if (d.label_params.rank() != 2 || d.label_params.shape()[0] != s[0]) {
    throw ShapeError("archive: labels must be (M, classes), got " + to_string(d.label_params.shape()));
  }
  Writer w;
  w.bytes(kMagic, 4);
  w.u32(archive.version);
  w.u32(narrow(s[0], "count"));
  w.u32(narrow(d.classes(), "class count"));
  w.u32(narrow(s[1], "channels"));
  w.u32(narrow(s[2], "height"));
  w.u32(narrow(s[3], "width"));
  w.u8(archive.label_mode == LabelMode::kHard ? 1 : 0);
  w.u8(0);
  w.u8(0);
  w.u8(0);
  w.u32(narrow(archive.metadata.size(), "metadata"));
  w.bytes(archive.metadata.data(), archive.metadata.size());
  for (double v : d.images.data()) w.f64(v);
  for (double v : d.label_params.data()) w.f64(v);
  w.f64(d.inner_lr);
  return w.take();
}

DistilledArchive decode_archive(std::string_view bytes) {
  Reader r(bytes);
  if (r.take(4) != std::string_view(kMagic, 4)) throw DataError("archive: bad magic");
  DistilledArchive out;
  out.version = r.u32();
  if (out.version != kArchiveVersion) {
    throw DataError("archive: format version " + std::to_string(out.version) +
                    " is not supported (expected " + std::to_string(kArchiveVersion) + ")");
  }
  const std::size_t count = r.u32();
  const std::size_t classes = r.u32();
  const std::size_t channels = r.u32();
  const std::size_t height = r.u32();
  const std::size_t width = r.u32();
  const std::uint8_t mode = r.u8();
  if (mode > 1) throw DataError("archive: unknown label mode " + std::to_string(mode));
  out.label_mode = mode == 1 ? LabelMode::kHard : LabelMode::kSoft;
  for (int i = 0; i < 3; ++i) {
    if (r.u8() != 0) throw DataError("archive: nonzero reserved byte");
  }
  if (count == 0 || classes == 0 || channels == 0 || height == 0 || width == 0) {
    throw DataError("archive: zero dimension in header");
  }
  const std::size_t meta_len = r.u32();
  out.metadata = std::string(r.take(meta_len));

  const std::size_t n_images = count * channels * height * width;
  const std::size_t n_labels = count * classes;
  if (r.remaining() != 8 * (n_images + n_labels + 1)) {
    throw DataError("archive: payload size does not match header");
  }
  std::vector<double> images(n_images), labels(n_labels);
  for (double& v : images) v = r.f64();
  for (double& v : labels) v = r.f64();
  out.set.images = Tensor({count, channels, height, width}, std::move(images));
  out.set.label_params = Tensor({count, classes}, std::move(labels));
  out.set.inner_lr = r.f64();
  return out;
}

void save_archive(const std::filesystem::path& path, const DistilledArchive& archive) {
  write_file_atomic(path, encode_archive(archive));
}

DistilledArchive load_archive(const std::filesystem::path& path) {
  try {
    return decode_archive(read_file(path));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace softdistill
