#include "episodica/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "episodica/error.hpp"

namespace episodica {

Image to_rgb(const Image& img) {
  if (img.channels == 3) return img;
  if (img.channels != 1) throw DataError("to_rgb: unsupported channel count " + std::to_string(img.channels));
  Image out(3, img.height, img.width);
  const std::size_t plane = img.height * img.width;
  for (std::size_t c = 0; c < 3; ++c) std::copy(img.data.begin(), img.data.end(), out.data.begin() + c * plane);
  return out;
}

Tensor stack_images(std::span<const Image> images) {
  if (images.empty()) throw ContractError("stack_images: empty batch");
  const Image& first = images.front();
  std::vector<float> data;
  data.reserve(images.size() * first.data.size());
  for (const auto& img : images) {
    if (img.channels != first.channels || img.height != first.height || img.width != first.width)
      throw DimensionError("stack_images: image sizes differ within the batch");
    data.insert(data.end(), img.data.begin(), img.data.end());
  }
  return Tensor({images.size(), first.channels, first.height, first.width}, std::move(data));
}

namespace {

class HeaderReader {
 public:
  explicit HeaderReader(std::span<const std::uint8_t> b) : bytes_(b) {}

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

  std::size_t read_uint(const char* what) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    std::size_t v = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      v = v * 10 + (bytes_[pos_] - '0');
      if (v > (1u << 24)) throw FormatError(std::string("netpbm: ") + what + " too large", start);
      ++pos_;
    }
    if (pos_ == start) throw FormatError(std::string("netpbm: expected ") + what, start);
    token_start_ = start;
    return v;
  }

  std::size_t pos_ = 0;
  std::size_t token_start_ = 0;  // offset of the last number read
  std::span<const std::uint8_t> bytes_;
};

}  // namespace

Image decode_netpbm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '6' && bytes[1] != '5'))
    throw FormatError("netpbm: bad magic, expected P6 or P5", 0);
  const std::size_t channels = bytes[1] == '6' ? 3 : 1;
  HeaderReader r(bytes);
  r.pos_ = 2;
  const std::size_t width = r.read_uint("width");
  if (width == 0) throw FormatError("netpbm: zero width", r.token_start_);
  const std::size_t height = r.read_uint("height");
  if (height == 0) throw FormatError("netpbm: zero height", r.token_start_);
  const std::size_t maxval = r.read_uint("maxval");
  const std::size_t maxval_at = r.token_start_;
  if (maxval != 255) throw FormatError("netpbm: maxval " + std::to_string(maxval) + " unsupported (need 255)", maxval_at);
  if (r.pos_ >= bytes.size() || !std::isspace(bytes[r.pos_]))
    throw FormatError("netpbm: missing whitespace after maxval", r.pos_);
  std::size_t at = r.pos_ + 1;
  const std::size_t need = channels * width * height;
  if (bytes.size() < at + need)
    throw FormatError("netpbm: truncated payload, need " + std::to_string(need) + " bytes", bytes.size());
  Image img(channels, height, width);
  // file is interleaved HWC
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x)
      for (std::size_t c = 0; c < channels; ++c) img.at(c, y, x) = static_cast<float>(bytes[at++]) / 255.0f;
  return img;
}

std::vector<std::uint8_t> encode_netpbm(const Image& img) {
  if (img.channels != 1 && img.channels != 3)
    throw DataError("encode_netpbm: unsupported channel count " + std::to_string(img.channels));
  const std::string header = std::string(img.channels == 3 ? "P6" : "P5") + "\n" + std::to_string(img.width) + " " +
                             std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + img.data.size());
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      for (std::size_t c = 0; c < img.channels; ++c) {
        const float v = std::clamp(img.at(c, y, x), 0.0f, 1.0f);
        out.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0f)));
      }
  return out;
}

Image load_ppm_pgm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open image " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  try {
    return decode_netpbm(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.detail(), e.offset());
  }
}

void save_ppm_pgm(const Image& img, const std::filesystem::path& path) {
  const auto bytes = encode_netpbm(img);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace episodica
