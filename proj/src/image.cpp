#include "scnn/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "scnn/errors.hpp"

namespace scnn {

bool pixels_in_unit_range(const Image& image) {
  return std::all_of(image.pixels.begin(), image.pixels.end(),
                     [](float v) { return v >= 0.0f && v <= 1.0f; });
}

Tensor to_tensor(const Image& image) {
  Tensor t({image.height, image.width, Image::channels});
  std::copy(image.pixels.begin(), image.pixels.end(), t.values().begin());
  return t;
}

namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("short write to " + path.string());
}

class NetpbmHeader {
 public:
  explicit NetpbmHeader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::string magic() {
    if (bytes_.size() < 2) throw FormatError("netpbm header is truncated");
    pos_ = 2;
    return {static_cast<char>(bytes_[0]), static_cast<char>(bytes_[1])};
  }

  std::size_t number() {
    skip_space_and_comments();
    std::size_t value = 0;
    std::size_t digits = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      value = value * 10 + (bytes_[pos_++] - '0');
      if (++digits > 9) throw FormatError("netpbm header value is too large");
    }
    if (digits == 0) throw FormatError("netpbm header is malformed");
    return value;
  }

  // Exactly one whitespace byte separates the header from the raster.
  std::size_t raster_offset() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) throw FormatError("netpbm header is malformed");
    return pos_ + 1;
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

Image decode_ppm(std::span<const std::uint8_t> bytes) {
  NetpbmHeader header(bytes);
  if (header.magic() != "P6") throw FormatError("not a binary PPM (P6) image");
  const std::size_t width = header.number();
  const std::size_t height = header.number();
  const std::size_t maxval = header.number();
  if (width == 0 || height == 0) throw FormatError("PPM image has a zero dimension");
  if (maxval == 0 || maxval > 65535) throw FormatError("PPM maxval out of range");
  const std::size_t offset = header.raster_offset();
  const std::size_t sample_bytes = maxval > 255 ? 2 : 1;
  const std::size_t needed = width * height * 3 * sample_bytes;
  if (bytes.size() - offset < needed) throw FormatError("PPM raster is truncated");

  Image image(height, width);
  const float scale = 1.0f / static_cast<float>(maxval);
  const std::uint8_t* p = bytes.data() + offset;
  for (std::size_t i = 0; i < width * height * 3; ++i) {
    std::size_t v = sample_bytes == 2 ? (static_cast<std::size_t>(p[2 * i]) << 8 | p[2 * i + 1]) : p[i];
    v = std::min(v, maxval);
    image.pixels[i] = static_cast<float>(v) * scale;
  }
  return image;
}

Image read_ppm(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return decode_ppm(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> encode_ppm(const Image& image) {
  const std::string header = "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + image.pixels.size());
  for (float v : image.pixels) {
    const float clamped = std::clamp(v, 0.0f, 1.0f);
    out.push_back(static_cast<std::uint8_t>(std::lround(clamped * 255.0f)));
  }
  return out;
}

void write_ppm(const std::filesystem::path& path, const Image& image) { write_file(path, encode_ppm(image)); }

void write_pgm(const std::filesystem::path& path, std::size_t height, std::size_t width,
               std::span<const std::uint8_t> gray) {
  if (gray.size() != height * width) throw ShapeError("graymap size does not match its dimensions");
  const std::string header = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), gray.begin(), gray.end());
  write_file(path, out);
}

GrayImage read_pgm(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  NetpbmHeader header(bytes);
  if (header.magic() != "P5") throw FormatError(path.string() + ": not a binary PGM (P5) image");
  GrayImage g;
  g.width = header.number();
  g.height = header.number();
  const std::size_t maxval = header.number();
  if (maxval != 255) throw FormatError(path.string() + ": only 8-bit graymaps are supported");
  const std::size_t offset = header.raster_offset();
  if (bytes.size() - offset < g.width * g.height) throw FormatError(path.string() + ": PGM raster is truncated");
  g.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(offset),
                  bytes.begin() + static_cast<std::ptrdiff_t>(offset + g.width * g.height));
  return g;
}

}  // namespace scnn
