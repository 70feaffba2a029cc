#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "episodica/tensor.hpp"

// ETEN1 binary tensor container:
//   "ETEN1\0" | u8 rank | rank x u32 LE dims | f32 LE payload
namespace episodica::eten {

inline constexpr std::uint8_t kMagic[6] = {'E', 'T', 'E', 'N', '1', '\0'};

std::vector<std::uint8_t> encode(const Tensor& tensor);
/// Throws FormatError (with byte offset) on bad magic, rank or truncation.
Tensor decode(std::span<const std::uint8_t> bytes);

void save(const Tensor& tensor, const std::filesystem::path& path);
Tensor load(const std::filesystem::path& path);

}  // namespace episodica::eten
