#pragma once

// Binary PGM (P5) and PPM (P6) with 8-bit samples.

#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include "fireline/error.hpp"

namespace fireline::netpbm {

struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 1;  // 1 for PGM, 3 for PPM
  unsigned maxval = 255;
  std::vector<std::uint8_t> pixels;  // row-major, interleaved channels
};

namespace detail {

class HeaderReader {
 public:
  HeaderReader(std::string_view bytes, std::size_t start) : bytes_(bytes), pos_(start) {}

  std::size_t offset() const { return pos_; }

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

  std::size_t number(const char* what) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    std::size_t v = 0;
    while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
      v = v * 10 + static_cast<std::size_t>(bytes_[pos_] - '0');
      if (v > (1u << 24)) throw ParseError(std::string(what) + " is too large", start);
      ++pos_;
    }
    if (pos_ == start) {
      if (pos_ >= bytes_.size()) throw ParseError(std::string("header truncated before ") + what, pos_);
      throw ParseError(std::string("expected ") + what, pos_);
    }
    return v;
  }

  void single_whitespace() {
    if (pos_ >= bytes_.size()) throw ParseError("header truncated before raster", pos_);
    if (!std::isspace(static_cast<unsigned char>(bytes_[pos_])))
      throw ParseError("expected whitespace after maxval", pos_);
    ++pos_;
  }

 private:
  std::string_view bytes_;
  std::size_t pos_;
};

}  // namespace detail

inline Image decode(std::string_view bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6'))
    throw ParseError("not a binary netpbm file (expected magic P5 or P6)", 0);
  Image img;
  img.channels = bytes[1] == '5' ? 1 : 3;
  detail::HeaderReader r(bytes, 2);
  img.width = r.number("width");
  img.height = r.number("height");
  r.skip_space_and_comments();
  const std::size_t maxval_at = r.offset();
  const std::size_t maxval = r.number("maxval");
  if (img.width == 0 || img.height == 0) throw ParseError("image extents must be positive", 2);
  if (maxval == 0 || maxval > 255)
    throw ParseError("unsupported maxval " + std::to_string(maxval) + " (need 1..255)", maxval_at);
  img.maxval = static_cast<unsigned>(maxval);
  r.single_whitespace();
  const std::size_t raster = r.offset();
  const std::size_t need = img.width * img.height * img.channels;
  const std::size_t have = bytes.size() - raster;
  if (have < need)
    throw ParseError("truncated raster: expected " + std::to_string(need) + " bytes, found " +
                         std::to_string(have),
                     bytes.size());
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(raster),
                    bytes.begin() + static_cast<std::ptrdiff_t>(raster + need));
  return img;
}

inline std::string encode(const Image& img) {
  if (img.pixels.size() != img.width * img.height * img.channels)
    throw DataError("netpbm: pixel buffer size does not match extents");
  std::string out = (img.channels == 1 ? "P5\n" : "P6\n") + std::to_string(img.width) + " " +
                    std::to_string(img.height) + "\n" + std::to_string(img.maxval) + "\n";
  out.append(img.pixels.begin(), img.pixels.end());
  return out;
}

inline std::string read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_bytes(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("short write to " + path.string());
}

inline Image read(const std::filesystem::path& path) {
  try {
    return decode(read_bytes(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.reason(), e.offset());
  }
}

inline void write(const std::filesystem::path& path, const Image& img) {
  write_bytes(path, encode(img));
}

}  // namespace fireline::netpbm
