#include "sgen/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

namespace sgen {
namespace {

class HeaderReader {
 public:
  explicit HeaderReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  int read_uint(const char* field) {
    skip_space_and_comments();
    if (pos_ >= bytes_.size()) throw ParseError(std::string("truncated header, missing ") + field, pos_);
    if (!std::isdigit(bytes_[pos_])) throw ParseError(std::string("expected ") + field, pos_);
    long value = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > (1L << 24)) throw ParseError(std::string(field) + " out of range", pos_);
      ++pos_;
    }
    return static_cast<int>(value);
  }

  std::size_t pos() const { return pos_; }
  void advance(std::size_t n) { pos_ += n; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

Image8 decode_netpbm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6'))
    throw ParseError("not a binary PGM/PPM file (expected P5 or P6)", 0);
  const int channels = bytes[1] == '5' ? 1 : 3;
  HeaderReader r(bytes);
  r.advance(2);
  const int width = r.read_uint("width");
  const int height = r.read_uint("height");
  const std::size_t maxval_at = r.pos();
  const int maxval = r.read_uint("maxval");
  if (width < 1 || height < 1) throw ParseError("image dimensions must be positive", maxval_at);
  if (maxval != 255)
    throw ParseError("unsupported maxval " + std::to_string(maxval) + " (only 255)", maxval_at);
  if (r.pos() >= bytes.size() || !std::isspace(bytes[r.pos()]))
    throw ParseError("missing whitespace after maxval", r.pos());
  r.advance(1);
  Image8 img(channels, height, width);
  const std::size_t need = img.pixels.size();
  if (bytes.size() - r.pos() < need)
    throw ParseError("truncated pixel data: need " + std::to_string(need) + " bytes, have " +
                         std::to_string(bytes.size() - r.pos()),
                     bytes.size());
  std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(r.pos()), need, img.pixels.begin());
  return img;
}

std::vector<std::uint8_t> encode_netpbm(const Image8& image) {
  if (image.channels != 1 && image.channels != 3)
    throw ConfigError("netpbm supports 1 or 3 channels, got " + std::to_string(image.channels));
  const std::string header = std::string(image.channels == 1 ? "P5" : "P6") + "\n" +
                             std::to_string(image.width) + " " + std::to_string(image.height) +
                             "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), image.pixels.begin(), image.pixels.end());
  return out;
}

Image8 load_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return decode_netpbm(bytes);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.offset());
  }
}

void save_image(const Image8& image, const std::filesystem::path& path) {
  const auto bytes = encode_netpbm(image);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write image '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

Tensor to_tensor(const Image8& image) {
  Tensor t(Shape{1, image.channels, image.height, image.width});
  for (int c = 0; c < image.channels; ++c)
    for (int y = 0; y < image.height; ++y)
      for (int x = 0; x < image.width; ++x) t.at(0, c, y, x) = image.at(y, x, c) / 127.5 - 1.0;
  return t;
}

Image8 to_image8(const Tensor& t, int item) {
  const Shape s = t.shape();
  if (item < 0 || item >= s.n) throw ConfigError("to_image8: item out of range for " + s.str());
  Image8 img(s.c, s.h, s.w);
  for (int c = 0; c < s.c; ++c)
    for (int y = 0; y < s.h; ++y)
      for (int x = 0; x < s.w; ++x) {
        const double v = std::round((t.at(item, c, y, x) + 1.0) * 127.5);
        img.at(y, x, c) = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
      }
  return img;
}

}  // namespace sgen
