#pragma once

#include "wshape/safetensors.hpp"
#include "wshape/types.hpp"

#include "json.hpp"

#include <array>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <regex>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace wshape {

/// Maps tensor names to (layer, kind). Each template carries a `{i}`
/// placeholder for the layer index; a leading "..." matches any dotted prefix.
class NameSchema {
public:
  struct Entry {
    std::string pattern;
    ProjectionKind kind;
  };

  NameSchema() = default;
  explicit NameSchema(std::vector<Entry> entries);

  /// `...layers.{i}.self_attn.{q,k,v,o}_proj.weight` and
  /// `...layers.{i}.mlp.{gate,up,down}_proj.weight`.
  static NameSchema default_schema();

  /// `{"<template>": "<kind>", ...}`; kind accepts q/k/v/o/gate/up/down.
  static NameSchema from_json(const nlohmann::json& doc);

  std::optional<std::pair<int, ProjectionKind>> match(const std::string& tensor_name) const;
  const std::vector<Entry>& entries() const { return entries_; }

private:
  std::vector<Entry> entries_;
  std::vector<std::regex> compiled_;
};

struct ProjectionMatrix {
  int layer_index = 0;
  ProjectionKind kind = ProjectionKind::Q;
  Matrix values;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
};

struct MatrixShape {
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  bool operator==(const MatrixShape&) const = default;
};

/// All L x 7 projection matrices of one model. Matrices resolved from files are
/// read on first use of `matrix()` and widened to double; nothing is cached, so
/// a ModelWeights stays immutable and cheap to share across threads.
class ModelWeights {
public:
  /// In-memory construction; validates completeness, shapes and finiteness.
  static ModelWeights from_matrices(std::string model_id, std::vector<ProjectionMatrix> matrices);

  const std::string& model_id() const { return model_id_; }
  int num_layers() const { return num_layers_; }
  MatrixShape shape(ProjectionKind kind) const { return shapes_[kind_index(kind)]; }

  /// Throws NonFinite if a file-backed tensor contains NaN/Inf.
  std::shared_ptr<const Matrix> matrix(int layer, ProjectionKind kind) const;

  /// Tensor name the matrix came from, or empty for in-memory models.
  std::string source_name(int layer, ProjectionKind kind) const;

  bool operator==(const ModelWeights& other) const;

private:
  friend ModelWeights load_model_weights(const std::filesystem::path&, const NameSchema&);

  struct FileRef {
    std::shared_ptr<const safetensors::File> file;
    safetensors::TensorInfo info;
  };
  struct Slot {
    std::shared_ptr<const Matrix> resident;
    std::optional<FileRef> lazy;
  };

  const Slot& slot(int layer, ProjectionKind kind) const;

  std::string model_id_;
  int num_layers_ = 0;
  std::array<MatrixShape, kNumKinds> shapes_{};
  std::vector<Slot> slots_; // layer-major, kind-minor
};

/// `path` is a single .safetensors file or a directory whose *.safetensors
/// shards are scanned in name order. The model id is the file stem or the
/// directory name.
ModelWeights load_model_weights(const std::filesystem::path& path,
                                const NameSchema& schema = NameSchema::default_schema());

void emit_tensors(std::span<const safetensors::NamedTensor> tensors,
                  const std::filesystem::path& path);
void emit_tensors(const std::map<std::string, Matrix>& tensors, const std::filesystem::path& path);

} // namespace wshape
