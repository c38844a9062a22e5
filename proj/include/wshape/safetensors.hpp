#pragma once

#include "wshape/types.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace wshape::safetensors {

enum class DType { F64, F32, F16, BF16, Other };

std::string_view dtype_name(DType dtype);
std::size_t dtype_size(DType dtype);

struct TensorInfo {
  std::string name;
  DType dtype = DType::Other;
  std::string dtype_label; // raw header string, kept for unsupported dtypes
  std::vector<std::int64_t> shape;
  std::uint64_t begin = 0; // offsets relative to the start of the payload
  std::uint64_t end = 0;
};

/// Header-only view of a safetensors file. Payload bytes are read on demand so
/// large checkpoints never have to be resident at once.
class File {
public:
  static File open(const std::filesystem::path& path);

  const std::filesystem::path& path() const { return path_; }
  const std::map<std::string, TensorInfo>& tensors() const { return tensors_; }
  const std::map<std::string, std::string>& metadata() const { return metadata_; }
  bool contains(const std::string& name) const { return tensors_.contains(name); }

  /// Reads a 1-D or 2-D floating tensor and widens it to double. A 1-D tensor
  /// becomes a single row.
  Matrix read_matrix(const std::string& name) const;
  Matrix read_matrix(const TensorInfo& info) const;

private:
  std::filesystem::path path_;
  std::uint64_t payload_offset_ = 0;
  std::map<std::string, TensorInfo> tensors_;
  std::map<std::string, std::string> metadata_;
};

using NamedTensor = std::pair<std::string, Matrix>;

/// Serializes tensors in sorted name order with a space-padded, key-sorted
/// JSON header, so identical input always yields identical bytes.
void write(const std::filesystem::path& path, std::span<const NamedTensor> tensors,
           DType storage = DType::F64,
           const std::map<std::string, std::string>& metadata = {});

std::vector<std::uint8_t> serialize(std::span<const NamedTensor> tensors,
                                    DType storage = DType::F64,
                                    const std::map<std::string, std::string>& metadata = {});

float half_to_float(std::uint16_t bits);
float bfloat16_to_float(std::uint16_t bits);

} // namespace wshape::safetensors
