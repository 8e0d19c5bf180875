#include "dyad/archive.hpp"

#include <fstream>
#include <sstream>

#include "dyad/binio.hpp"

namespace dyad {

namespace io {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

}  // namespace io

std::string encode_archive(const NamedTensors& tensors) {
  io::ByteWriter w;
  w.bytes(kArchiveMagic);
  w.u32(kArchiveVersion);
  for (const auto& [name, t] : tensors) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.bytes(name);
    w.u32(2);
    w.u64(static_cast<std::uint64_t>(t.rows()));
    w.u64(static_cast<std::uint64_t>(t.cols()));
    w.f64s({t.data(), static_cast<std::size_t>(t.size())});
  }
  return w.take();
}

NamedTensors decode_archive(std::string_view bytes) {
  io::ByteReader r(bytes);
  r.expect_magic(kArchiveMagic);
  if (const auto v = r.u32(); v != kArchiveVersion) {
    throw io::FormatError("unsupported archive version " + std::to_string(v));
  }
  NamedTensors out;
  while (!r.at_end()) {
    std::string name(r.bytes(r.u32()));
    if (r.u32() != 2) throw io::FormatError("archive record '" + name + "': rank must be 2");
    const auto rows = r.u64(), cols = r.u64();
    if (rows * cols * 8 > r.remaining()) throw io::FormatError("archive record '" + name + "' truncated");
    Tensor t(static_cast<Index>(rows), static_cast<Index>(cols));
    r.f64s({t.data(), static_cast<std::size_t>(t.size())});
    if (!out.emplace(std::move(name), std::move(t)).second) {
      throw io::FormatError("duplicate archive record");
    }
  }
  return out;
}

void save_archive(const std::filesystem::path& path, const NamedTensors& tensors) {
  io::write_file(path, encode_archive(tensors));
}

NamedTensors load_archive(const std::filesystem::path& path) {
  return decode_archive(io::read_file(path));
}

}  // namespace dyad
