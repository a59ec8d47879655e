#include "inkl/binary_io.hpp"

#include <zlib.h>

#include <fstream>
#include <iterator>

namespace inkl::io {

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large buffers in chunks.
  std::size_t offset = 0;
  while (offset < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - offset, 1u << 30));
    crc = ::crc32(crc, bytes.data() + offset, chunk);
    offset += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

void ByteReader::require(std::size_t n) const {
  if (pos_ + n > bytes_.size()) {
    fail("truncated: need " + std::to_string(n) + " more bytes, " +
         std::to_string(bytes_.size() - pos_) + " left");
  }
}

void ByteReader::fail(const std::string& what) const {
  throw FormatError(what + " (at byte offset " + std::to_string(pos_) + ")");
}

std::string ByteReader::get_string(std::size_t n) {
  require(n);
  std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
  pos_ += n;
  return s;
}

std::span<const std::uint8_t> ByteReader::get_bytes(std::size_t n) {
  require(n);
  auto s = bytes_.subspan(pos_, n);
  pos_ += n;
  return s;
}

void ByteReader::check_trailing_crc() {
  if (bytes_.size() < 4) {
    throw FormatError("truncated: no room for CRC32 (at byte offset " + std::to_string(bytes_.size()) + ")");
  }
  const std::size_t body = bytes_.size() - 4;
  std::uint32_t stored;
  std::memcpy(&stored, bytes_.data() + body, 4);
  const std::uint32_t actual = crc32(bytes_.first(body));
  if (stored != actual) {
    throw FormatError("checksum mismatch: stored CRC32 " + std::to_string(stored) + ", computed " +
                      std::to_string(actual) + " (at byte offset " + std::to_string(body) + ")");
  }
  bytes_ = bytes_.first(body);
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

}  // namespace inkl::io
