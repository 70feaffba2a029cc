#include "episodica/eten.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "episodica/error.hpp"

namespace episodica::eten {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[at + i]) << (8 * i);
  return v;
}

}  // namespace

std::vector<std::uint8_t> encode(const Tensor& tensor) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  out.reserve(7 + 4 * tensor.rank() + 4 * tensor.size());
  out.push_back(static_cast<std::uint8_t>(tensor.rank()));
  for (auto d : tensor.shape()) put_u32(out, static_cast<std::uint32_t>(d));
  for (float f : tensor.data()) put_u32(out, std::bit_cast<std::uint32_t>(f));
  return out;
}

Tensor decode(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 7) throw FormatError("ETEN1: truncated header", bytes.size());
  for (std::size_t i = 0; i < 6; ++i)
    if (bytes[i] != kMagic[i]) throw FormatError("ETEN1: bad magic", i);
  const std::size_t rank = bytes[6];
  if (rank > Tensor::kMaxRank) throw FormatError("ETEN1: rank " + std::to_string(rank) + " exceeds 4", 6);
  std::size_t at = 7;
  if (bytes.size() < at + 4 * rank) throw FormatError("ETEN1: truncated dimensions", bytes.size());
  Shape shape(rank);
  for (std::size_t i = 0; i < rank; ++i, at += 4) {
    shape[i] = get_u32(bytes, at);
    if (shape[i] == 0) throw FormatError("ETEN1: zero dimension", at);
  }
  const std::size_t n = shape_numel(shape);
  if (bytes.size() < at + 4 * n) throw FormatError("ETEN1: truncated payload", bytes.size());
  if (bytes.size() > at + 4 * n) throw FormatError("ETEN1: trailing bytes after payload", at + 4 * n);
  std::vector<float> data(n);
  for (std::size_t i = 0; i < n; ++i, at += 4) data[i] = std::bit_cast<float>(get_u32(bytes, at));
  return Tensor(std::move(shape), std::move(data));
}

void save(const Tensor& tensor, const std::filesystem::path& path) {
  const auto bytes = encode(tensor);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw DataError("failed writing " + path.string());
}

Tensor load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  try {
    return decode(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.detail(), e.offset());
  }
}

}  // namespace episodica::eten
