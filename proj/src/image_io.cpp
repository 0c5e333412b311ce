// SPDX-License-Identifier: Apache-2.0
#include "softdistill/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "softdistill/errors.hpp"

namespace softdistill {

namespace fs = std::filesystem;

void write_file_atomic(const fs::path& path, std::string_view bytes) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw Error("failed writing " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw Error("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

namespace {

// --- PGM -----------------------------------------------------------------------

class PgmReader {
 public:
  PgmReader(std::string_view bytes, const fs::path& path) : bytes_(bytes), path_(path) {}

  GrayImage read() {
    if (bytes_.size() < 2 || bytes_[0] != 'P' || (bytes_[1] != '5' && bytes_[1] != '2')) {
      fail("not a P2/P5 PGM file");
    }
    const bool binary = bytes_[1] == '5';
    pos_ = 2;
    GrayImage img;
    img.width = next_number();
    img.height = next_number();
    const std::size_t maxval = next_number();
    if (img.width == 0 || img.height == 0) fail("zero image dimension");
    if (maxval == 0 || maxval > 65535) fail("maxval must be in 1..65535");
    const std::size_t n = img.width * img.height;
    img.pixels.resize(n);
    const double scale = 1.0 / static_cast<double>(maxval);
    if (binary) {
      ++pos_;  // single whitespace after maxval
      const std::size_t bytes_per = maxval < 256 ? 1 : 2;
      if (bytes_.size() < pos_ + n * bytes_per) fail("truncated pixel data");
      for (std::size_t i = 0; i < n; ++i) {
        std::size_t v;
        if (bytes_per == 1) {
          v = static_cast<unsigned char>(bytes_[pos_ + i]);
        } else {
          v = (static_cast<std::size_t>(static_cast<unsigned char>(bytes_[pos_ + 2 * i])) << 8) |
              static_cast<unsigned char>(bytes_[pos_ + 2 * i + 1]);
        }
        if (v > maxval) fail("pixel exceeds maxval");
        img.pixels[i] = static_cast<double>(v) * scale;
      }
    } else {
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t v = next_number();
        if (v > maxval) fail("pixel exceeds maxval");
        img.pixels[i] = static_cast<double>(v) * scale;
      }
    }
    return img;
  }

 private:
  [[noreturn]] void fail(const std::string& why) const {
    throw DataError(path_.string() + ": " + why);
  }

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const char c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::size_t next_number() {
    skip_space_and_comments();
    if (pos_ >= bytes_.size() || !std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
      fail("malformed header");
    }
    std::size_t v = 0;
    while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
      v = v * 10 + static_cast<std::size_t>(bytes_[pos_] - '0');
      if (v > (1u << 30)) fail("number too large");
      ++pos_;
    }
    return v;
  }

  std::string_view bytes_;
  const fs::path& path_;
  std::size_t pos_ = 0;
};

// --- PNG -----------------------------------------------------------------------

struct MemoryReader {
  std::string_view bytes;
  std::size_t pos = 0;
};

void png_read_from_memory(png_structp png, png_bytep out, png_size_t length) {
  auto* src = static_cast<MemoryReader*>(png_get_io_ptr(png));
  if (src->pos + length > src->bytes.size()) png_error(png, "truncated PNG");
  std::memcpy(out, src->bytes.data() + src->pos, length);
  src->pos += length;
}

void png_write_to_string(png_structp png, png_bytep data, png_size_t length) {
  auto* dst = static_cast<std::string*>(png_get_io_ptr(png));
  dst->append(reinterpret_cast<const char*>(data), length);
}

void png_flush_noop(png_structp) {}

[[noreturn]] void png_throw(png_structp, png_const_charp message) { throw DataError(message); }

void png_warn_silent(png_structp, png_const_charp) {}

GrayImage read_png(std::string_view bytes, const fs::path& path) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_throw,
                                           png_warn_silent);
  if (png == nullptr) throw DataError(path.string() + ": cannot create PNG reader");
  png_infop info = png_create_info_struct(png);
  struct Cleanup {
    png_structp* png;
    png_infop* info;
    ~Cleanup() { png_destroy_read_struct(png, info, nullptr); }
  } cleanup{&png, &info};

  try {
    MemoryReader src{bytes, 0};
    png_set_read_fn(png, &src, png_read_from_memory);
    png_read_info(png, info);
    const png_uint_32 width = png_get_image_width(png, info);
    const png_uint_32 height = png_get_image_height(png, info);
    const int color = png_get_color_type(png, info);
    const int depth = png_get_bit_depth(png, info);
    if (color != PNG_COLOR_TYPE_GRAY && color != PNG_COLOR_TYPE_GRAY_ALPHA) {
      throw DataError("only grayscale PNG images are supported");
    }
    if (color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_strip_alpha(png);
    if (depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    png_read_update_info(png, info);
    const std::size_t row_bytes = png_get_rowbytes(png, info);
    std::vector<unsigned char> raw(row_bytes * height);
    std::vector<png_bytep> rows(height);
    for (png_uint_32 r = 0; r < height; ++r) rows[r] = raw.data() + r * row_bytes;
    png_read_image(png, rows.data());

    GrayImage img;
    img.height = height;
    img.width = width;
    img.pixels.resize(static_cast<std::size_t>(width) * height);
    const bool wide = depth == 16;
    const double scale = wide ? 1.0 / 65535.0 : 1.0 / 255.0;
    for (std::size_t r = 0; r < height; ++r) {
      for (std::size_t c = 0; c < width; ++c) {
        const unsigned char* px = raw.data() + r * row_bytes + c * (wide ? 2 : 1);
        const unsigned v = wide ? (static_cast<unsigned>(px[0]) << 8) | px[1] : px[0];
        img.pixels[r * width + c] = static_cast<double>(v) * scale;
      }
    }
    return img;
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace

GrayImage read_image(const fs::path& path) {
  const std::string bytes = read_file(path);
  static constexpr unsigned char kPngMagic[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (bytes.size() >= 8 && std::memcmp(bytes.data(), kPngMagic, 8) == 0) {
    return read_png(bytes, path);
  }
  return PgmReader(bytes, path).read();
}

std::string encode_pgm8(std::size_t height, std::size_t width, std::span<const std::uint8_t> pixels) {
  std::string out = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(pixels.data()), pixels.size());
  return out;
}

std::string encode_png8(std::size_t height, std::size_t width, std::span<const std::uint8_t> pixels) {
  std::string out;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_throw,
                                            png_warn_silent);
  if (png == nullptr) throw Error("cannot create PNG writer");
  png_infop info = png_create_info_struct(png);
  struct Cleanup {
    png_structp* png;
    png_infop* info;
    ~Cleanup() { png_destroy_write_struct(png, info); }
  } cleanup{&png, &info};

  png_set_write_fn(png, &out, png_write_to_string, png_flush_noop);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t r = 0; r < height; ++r) {
    png_write_row(png, const_cast<png_bytep>(pixels.data() + r * width));
  }
  png_write_end(png, nullptr);
  return out;
}

std::vector<double> normalize_min_max(std::span<const double> values) {
  std::vector<double> out(values.size(), 0.5);
  if (values.empty()) return out;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double range = *hi - *lo;
  if (!(range > 0.0)) return out;
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - *lo) / range;
  return out;
}

std::vector<std::uint8_t> quantize8(std::span<const double> unit_values) {
  std::vector<std::uint8_t> out(unit_values.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = std::clamp(unit_values[i], 0.0, 1.0);
    out[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  return out;
}

void write_image(const fs::path& path, std::size_t height, std::size_t width,
                 std::span<const double> pixels) {
  if (pixels.size() != height * width) throw ShapeError("write_image: pixel count mismatch");
  const auto bytes = quantize8(pixels);
  const bool png = path.extension() == ".png";
  write_file_atomic(path, png ? encode_png8(height, width, bytes) : encode_pgm8(height, width, bytes));
}

}  // namespace softdistill
