#include "inkl/checkpoint.hpp"

#include "inkl/binary_io.hpp"

namespace inkl::io {

namespace {

constexpr char kMagic[4] = {'I', 'N', 'K', 'L'};

std::size_t dtype_size(DType t) {
  switch (t) {
    case DType::F32: return 4;
    case DType::F64: return 8;
    case DType::U8: return 1;
    case DType::U64: return 8;
  }
  return 0;
}

template <typename T>
constexpr DType dtype_of() {
  if constexpr (std::is_same_v<T, float>) return DType::F32;
  if constexpr (std::is_same_v<T, double>) return DType::F64;
  if constexpr (std::is_same_v<T, std::uint8_t>) return DType::U8;
  return DType::U64;
}

}  // namespace

std::size_t Blob::element_count() const {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

std::vector<std::uint8_t> encode_checkpoint(const std::vector<Blob>& blobs) {
  ByteWriter w;
  w.put_raw(kMagic, 4);
  w.put_u16(kCheckpointVersion);
  for (const auto& b : blobs) {
    if (b.name.size() > 0xFFFF) throw ArgumentError("checkpoint entry name too long: " + b.name);
    if (b.dims.size() > 0xFF) throw ArgumentError("checkpoint entry rank too large: " + b.name);
    if (b.payload.size() != b.element_count() * dtype_size(b.dtype)) {
      throw ArgumentError("checkpoint entry '" + b.name + "' payload does not match its dims");
    }
    w.put_u16(static_cast<std::uint16_t>(b.name.size()));
    w.put_string(b.name);
    w.put_u8(static_cast<std::uint8_t>(b.dtype));
    w.put_u8(static_cast<std::uint8_t>(b.dims.size()));
    for (auto d : b.dims) w.put_u32(d);
    w.put_bytes(b.payload);
  }
  w.put_crc();
  return w.bytes();
}

std::vector<Blob> decode_checkpoint(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    r.fail("bad magic, expected \"INKL\"");
  }
  r.check_trailing_crc();
  r.get_bytes(4);
  const auto version = r.get_u16();
  if (version != kCheckpointVersion) {
    r.fail("unsupported checkpoint version " + std::to_string(version));
  }
  std::vector<Blob> blobs;
  while (r.remaining() > 0) {
    Blob b;
    const auto name_len = r.get_u16();
    b.name = r.get_string(name_len);
    const auto dtype = r.get_u8();
    if (dtype > static_cast<std::uint8_t>(DType::U64)) r.fail("unknown dtype " + std::to_string(dtype));
    b.dtype = static_cast<DType>(dtype);
    const auto rank = r.get_u8();
    for (int i = 0; i < rank; ++i) b.dims.push_back(r.get_u32());
    const auto payload = r.get_bytes(b.element_count() * dtype_size(b.dtype));
    b.payload.assign(payload.begin(), payload.end());
    blobs.push_back(std::move(b));
  }
  return blobs;
}

void write_checkpoint(const std::filesystem::path& path, const std::vector<Blob>& blobs) {
  write_file(path, encode_checkpoint(blobs));
}

std::vector<Blob> read_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path));
}

template <typename T>
Blob vector_blob(const std::string& name, const std::vector<T>& values) {
  Blob b;
  b.name = name;
  b.dtype = dtype_of<T>();
  b.dims = {static_cast<std::uint32_t>(values.size())};
  b.payload.resize(values.size() * sizeof(T));
  std::memcpy(b.payload.data(), values.data(), b.payload.size());
  return b;
}

template <typename T>
Blob tensor_blob(const std::string& name, const ad::Tensor<T>& t) {
  Blob b;
  b.name = name;
  b.dtype = dtype_of<T>();
  for (int d : t.shape()) b.dims.push_back(static_cast<std::uint32_t>(d));
  b.payload.resize(t.values().size() * sizeof(T));
  std::memcpy(b.payload.data(), t.values().data(), b.payload.size());
  return b;
}

Blob text_blob(const std::string& name, const std::string& text) {
  Blob b;
  b.name = name;
  b.dtype = DType::U8;
  b.dims = {static_cast<std::uint32_t>(text.size())};
  b.payload.assign(text.begin(), text.end());
  return b;
}

Blob u64_blob(const std::string& name, std::uint64_t value) {
  return vector_blob<std::uint64_t>(name, {value});
}

template <typename T>
std::vector<T> blob_values(const Blob& blob, const ad::Shape& shape) {
  bool match = blob.dims.size() == shape.size();
  for (std::size_t i = 0; match && i < shape.size(); ++i) match = blob.dims[i] == static_cast<std::uint32_t>(shape[i]);
  if (!match) {
    std::string dims = "[";
    for (std::size_t i = 0; i < blob.dims.size(); ++i) dims += (i ? "," : "") + std::to_string(blob.dims[i]);
    throw ConfigError("checkpoint entry '" + blob.name + "' has dims " + dims + "], expected " +
                      ad::shape_str(shape));
  }
  const std::size_t n = blob.element_count();
  std::vector<T> out(n);
  if (blob.dtype == DType::F32) {
    for (std::size_t i = 0; i < n; ++i) {
      float v;
      std::memcpy(&v, blob.payload.data() + 4 * i, 4);
      out[i] = static_cast<T>(v);
    }
  } else if (blob.dtype == DType::F64) {
    for (std::size_t i = 0; i < n; ++i) {
      double v;
      std::memcpy(&v, blob.payload.data() + 8 * i, 8);
      out[i] = static_cast<T>(v);
    }
  } else {
    throw ConfigError("checkpoint entry '" + blob.name + "' is not floating point");
  }
  return out;
}

std::string blob_text(const Blob& blob) {
  if (blob.dtype != DType::U8) throw ConfigError("checkpoint entry '" + blob.name + "' is not text");
  return {blob.payload.begin(), blob.payload.end()};
}

std::uint64_t blob_u64(const Blob& blob) {
  if (blob.dtype != DType::U64 || blob.element_count() != 1) {
    throw ConfigError("checkpoint entry '" + blob.name + "' is not a u64 scalar");
  }
  std::uint64_t v;
  std::memcpy(&v, blob.payload.data(), 8);
  return v;
}

const Blob* find_blob(const std::vector<Blob>& blobs, const std::string& name) {
  for (const auto& b : blobs)
    if (b.name == name) return &b;
  return nullptr;
}

template <typename T>
std::vector<Blob> registry_blobs(const nn::ParamRegistry<T>& reg) {
  std::vector<Blob> out;
  out.reserve(reg.size());
  for (const auto& [name, t] : reg.entries()) out.push_back(tensor_blob(name, t));
  return out;
}

template <typename T>
void load_registry(nn::ParamRegistry<T>& reg, const std::vector<Blob>& blobs) {
  for (const auto& [name, t] : reg.entries()) {
    const Blob* b = find_blob(blobs, name);
    if (!b) throw ConfigError("checkpoint is missing parameter '" + name + "'");
    auto values = blob_values<T>(*b, t.shape());
    auto dst = ad::Tensor<T>(t).values_mut();
    std::copy(values.begin(), values.end(), dst.begin());
  }
}

template Blob tensor_blob(const std::string&, const ad::Tensor<float>&);
template Blob tensor_blob(const std::string&, const ad::Tensor<double>&);
template Blob vector_blob(const std::string&, const std::vector<float>&);
template Blob vector_blob(const std::string&, const std::vector<double>&);
template Blob vector_blob(const std::string&, const std::vector<std::uint64_t>&);
template std::vector<float> blob_values(const Blob&, const ad::Shape&);
template std::vector<double> blob_values(const Blob&, const ad::Shape&);
template std::vector<Blob> registry_blobs(const nn::ParamRegistry<float>&);
template std::vector<Blob> registry_blobs(const nn::ParamRegistry<double>&);
template void load_registry(nn::ParamRegistry<float>&, const std::vector<Blob>&);
template void load_registry(nn::ParamRegistry<double>&, const std::vector<Blob>&);

}  // namespace inkl::io
