#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "dyad/types.hpp"

namespace dyad {

inline constexpr std::string_view kArchiveMagic = "DYD1";
inline constexpr std::uint32_t kArchiveVersion = 1;

// Layout: "DYD1", u32 version, then records until end of input:
//   u32 name length, name bytes, u32 rank (2), u64 rows, u64 cols,
//   rows*cols little-endian f64 values in row-major order.
std::string encode_archive(const NamedTensors& tensors);
NamedTensors decode_archive(std::string_view bytes);

void save_archive(const std::filesystem::path& path, const NamedTensors& tensors);
NamedTensors load_archive(const std::filesystem::path& path);

}  // namespace dyad
