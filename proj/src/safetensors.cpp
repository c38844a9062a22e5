#include "wshape/safetensors.hpp"
#include "wshape/error.hpp"

#include "json.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace wshape::safetensors {

static_assert(std::endian::native == std::endian::little,
              "safetensors payloads are little-endian; big-endian hosts are unsupported");

using json = nlohmann::json;

namespace {

// Anything larger is almost certainly a corrupt or non-safetensors file.
constexpr std::uint64_t kMaxHeaderBytes = 100ull << 20;

DType parse_dtype(const std::string& label) {
  if (label == "F64") return DType::F64;
  if (label == "F32") return DType::F32;
  if (label == "F16") return DType::F16;
  if (label == "BF16") return DType::BF16;
  return DType::Other;
}

} // namespace

std::string_view dtype_name(DType dtype) {
  switch (dtype) {
  case DType::F64: return "F64";
  case DType::F32: return "F32";
  case DType::F16: return "F16";
  case DType::BF16: return "BF16";
  case DType::Other: return "OTHER";
  }
  return "OTHER";
}

std::size_t dtype_size(DType dtype) {
  switch (dtype) {
  case DType::F64: return 8;
  case DType::F32: return 4;
  case DType::F16:
  case DType::BF16: return 2;
  case DType::Other: return 0;
  }
  return 0;
}

float half_to_float(std::uint16_t bits) {
  const std::uint32_t sign = (bits >> 15) & 0x1u;
  const std::uint32_t exponent = (bits >> 10) & 0x1fu;
  const std::uint32_t mantissa = bits & 0x3ffu;
  float magnitude;
  if (exponent == 0) {
    magnitude = std::ldexp(static_cast<float>(mantissa), -24);
  } else if (exponent == 31) {
    magnitude = mantissa == 0 ? INFINITY : NAN;
  } else {
    magnitude = std::ldexp(static_cast<float>(mantissa | 0x400u), static_cast<int>(exponent) - 25);
  }
  return sign ? -magnitude : magnitude;
}

float bfloat16_to_float(std::uint16_t bits) {
  return std::bit_cast<float>(static_cast<std::uint32_t>(bits) << 16);
}

File File::open(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::UnreadableFile, "cannot open " + path.string());

  std::uint64_t header_size = 0;
  in.read(reinterpret_cast<char*>(&header_size), sizeof header_size);
  if (!in || header_size == 0 || header_size > kMaxHeaderBytes) {
    throw Error(ErrorCode::UnreadableFile, "bad safetensors header length in " + path.string());
  }
  std::string header(header_size, '\0');
  in.read(header.data(), static_cast<std::streamsize>(header_size));
  if (!in) throw Error(ErrorCode::UnreadableFile, "truncated header in " + path.string());

  in.seekg(0, std::ios::end);
  const auto file_size = static_cast<std::uint64_t>(in.tellg());
  const std::uint64_t payload_offset = sizeof header_size + header_size;
  const std::uint64_t payload_size = file_size - payload_offset;

  json parsed;
  try {
    parsed = json::parse(header);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::UnreadableFile, path.string() + ": " + e.what());
  }
  if (!parsed.is_object()) throw Error(ErrorCode::UnreadableFile, "header is not an object");

  File file;
  file.path_ = path;
  file.payload_offset_ = payload_offset;
  try {
    for (const auto& [key, value] : parsed.items()) {
      if (key == "__metadata__") {
        for (const auto& [mk, mv] : value.items()) {
          file.metadata_[mk] = mv.is_string() ? mv.get<std::string>() : mv.dump();
        }
        continue;
      }
      TensorInfo info;
      info.name = key;
      info.dtype_label = value.at("dtype").get<std::string>();
      info.dtype = parse_dtype(info.dtype_label);
      info.shape = value.at("shape").get<std::vector<std::int64_t>>();
      const auto offsets = value.at("data_offsets").get<std::vector<std::uint64_t>>();
      if (offsets.size() != 2 || offsets[0] > offsets[1] || offsets[1] > payload_size) {
        throw Error(ErrorCode::UnreadableFile, "tensor " + key + " has out-of-range offsets");
      }
      info.begin = offsets[0];
      info.end = offsets[1];
      file.tensors_.emplace(key, std::move(info));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::UnreadableFile, path.string() + ": " + e.what());
  }
  return file;
}

Matrix File::read_matrix(const std::string& name) const {
  const auto it = tensors_.find(name);
  if (it == tensors_.end()) throw Error(ErrorCode::MissingProjection, "no tensor named " + name);
  return read_matrix(it->second);
}

Matrix File::read_matrix(const TensorInfo& info) const {
  if (info.dtype == DType::Other) {
    throw Error(ErrorCode::UnreadableFile,
                "tensor " + info.name + " has unsupported dtype " + info.dtype_label);
  }
  if (info.shape.empty() || info.shape.size() > 2) {
    throw Error(ErrorCode::ShapeMismatch, "tensor " + info.name + " is not 1-D or 2-D");
  }
  const std::int64_t rows = info.shape.size() == 2 ? info.shape[0] : 1;
  const std::int64_t cols = info.shape.back();
  const std::uint64_t count = static_cast<std::uint64_t>(rows) * static_cast<std::uint64_t>(cols);
  const std::size_t width = dtype_size(info.dtype);
  if (info.end - info.begin != count * width) {
    throw Error(ErrorCode::UnreadableFile, "tensor " + info.name + " byte size disagrees with shape");
  }

  std::ifstream in(path_, std::ios::binary);
  if (!in) throw Error(ErrorCode::UnreadableFile, "cannot open " + path_.string());
  in.seekg(static_cast<std::streamoff>(payload_offset_ + info.begin));
  std::vector<char> raw(count * width);
  in.read(raw.data(), static_cast<std::streamsize>(raw.size()));
  if (!in) throw Error(ErrorCode::UnreadableFile, "short read for tensor " + info.name);

  Matrix out(rows, cols);
  double* dst = out.data();
  const char* src = raw.data();
  for (std::uint64_t i = 0; i < count; ++i) {
    switch (info.dtype) {
    case DType::F64: std::memcpy(&dst[i], src + i * 8, 8); break;
    case DType::F32: {
      float f;
      std::memcpy(&f, src + i * 4, 4);
      dst[i] = f;
      break;
    }
    case DType::F16:
    case DType::BF16: {
      std::uint16_t h;
      std::memcpy(&h, src + i * 2, 2);
      dst[i] = info.dtype == DType::F16 ? half_to_float(h) : bfloat16_to_float(h);
      break;
    }
    case DType::Other: break;
    }
  }
  return out;
}

std::vector<std::uint8_t> serialize(std::span<const NamedTensor> tensors, DType storage,
                                    const std::map<std::string, std::string>& metadata) {
  if (storage != DType::F64 && storage != DType::F32) {
    throw Error(ErrorCode::InvalidConfig, "only F64 and F32 output is supported");
  }
  std::map<std::string, const Matrix*> ordered;
  for (const auto& [name, values] : tensors) {
    if (name.empty()) throw Error(ErrorCode::InvalidConfig, "tensor names must be non-empty");
    if (name == "__metadata__") throw Error(ErrorCode::InvalidConfig, "reserved tensor name");
    if (!ordered.emplace(name, &values).second) {
      throw Error(ErrorCode::DuplicateName, "duplicate tensor name " + name);
    }
    if (!values.allFinite()) throw Error(ErrorCode::NonFinite, "tensor " + name + " has NaN/Inf");
  }

  const std::size_t width = dtype_size(storage);
  json header = json::object();
  if (!metadata.empty()) header["__metadata__"] = metadata;
  std::uint64_t offset = 0;
  for (const auto& [name, values] : ordered) {
    const std::uint64_t bytes = static_cast<std::uint64_t>(values->size()) * width;
    header[name] = {{"dtype", std::string(dtype_name(storage))},
                    {"shape", {values->rows(), values->cols()}},
                    {"data_offsets", {offset, offset + bytes}}};
    offset += bytes;
  }
  std::string text = header.dump();
  while (text.size() % 8 != 0) text.push_back(' ');

  std::vector<std::uint8_t> out(8 + text.size() + offset);
  const std::uint64_t header_size = text.size();
  std::memcpy(out.data(), &header_size, 8);
  std::memcpy(out.data() + 8, text.data(), text.size());
  std::uint8_t* cursor = out.data() + 8 + text.size();
  for (const auto& [name, values] : ordered) {
    const double* src = values->data();
    for (Eigen::Index i = 0; i < values->size(); ++i) {
      if (storage == DType::F64) {
        std::memcpy(cursor, &src[i], 8);
      } else {
        const float f = static_cast<float>(src[i]);
        std::memcpy(cursor, &f, 4);
      }
      cursor += width;
    }
  }
  return out;
}

void write(const std::filesystem::path& path, std::span<const NamedTensor> tensors, DType storage,
           const std::map<std::string, std::string>& metadata) {
  const auto bytes = serialize(tensors, storage, metadata);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoFailure, "write failed for " + path.string());
}

} // namespace wshape::safetensors
