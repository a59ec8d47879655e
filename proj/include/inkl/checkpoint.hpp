#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "inkl/nn.hpp"

// Checkpoint file: "INKL", u16 version, then per entry
//   name-length u16, name (utf-8), dtype u8, rank u8, dims u32[rank], payload
// in registry order, little-endian, followed by a CRC32 of all prior bytes.
namespace inkl::io {

inline constexpr std::uint16_t kCheckpointVersion = 1;

enum class DType : std::uint8_t { F32 = 0, F64 = 1, U8 = 2, U64 = 3 };

struct Blob {
  std::string name;
  DType dtype = DType::F32;
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> payload;

  std::size_t element_count() const;
};

std::vector<std::uint8_t> encode_checkpoint(const std::vector<Blob>& blobs);
std::vector<Blob> decode_checkpoint(std::span<const std::uint8_t> bytes);
void write_checkpoint(const std::filesystem::path& path, const std::vector<Blob>& blobs);
std::vector<Blob> read_checkpoint(const std::filesystem::path& path);

/// Tensor payload stored at the tensor's own precision.
template <typename T>
Blob tensor_blob(const std::string& name, const ad::Tensor<T>& t);
template <typename T>
Blob vector_blob(const std::string& name, const std::vector<T>& values);
Blob text_blob(const std::string& name, const std::string& text);
Blob u64_blob(const std::string& name, std::uint64_t value);

/// Values of a float blob converted to T; shape checked against `shape`.
template <typename T>
std::vector<T> blob_values(const Blob& blob, const ad::Shape& shape);
std::string blob_text(const Blob& blob);
std::uint64_t blob_u64(const Blob& blob);

const Blob* find_blob(const std::vector<Blob>& blobs, const std::string& name);

/// Registry parameters as blobs, in registry order.
template <typename T>
std::vector<Blob> registry_blobs(const nn::ParamRegistry<T>& reg);

/// Copies checkpoint values into a registry; every registry entry must be
/// present with a matching shape (ConfigError otherwise).
template <typename T>
void load_registry(nn::ParamRegistry<T>& reg, const std::vector<Blob>& blobs);

}  // namespace inkl::io
