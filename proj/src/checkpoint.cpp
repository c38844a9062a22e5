#include "wshape/checkpoint.hpp"
#include "wshape/error.hpp"

#include <algorithm>

namespace wshape {

namespace {

std::string escape_regex(const std::string& text) {
  static const std::string special = R"(\^$.|?*+()[]{})";
  std::string out;
  for (char c : text) {
    if (special.find(c) != std::string::npos) out.push_back('\\');
    out.push_back(c);
  }
  return out;
}

std::regex compile_template(const std::string& pattern) {
  std::string body = pattern;
  std::string prefix;
  if (body.starts_with("...")) {
    body = body.substr(3);
    prefix = "(?:.*\\.)?";
    if (body.starts_with(".")) body = body.substr(1);
  }
  const auto placeholder = body.find("{i}");
  if (placeholder == std::string::npos || body.find("{i}", placeholder + 1) != std::string::npos) {
    throw Error(ErrorCode::InvalidConfig, "name template needs exactly one {i}: " + pattern);
  }
  const std::string expr = prefix + escape_regex(body.substr(0, placeholder)) + "([0-9]+)" +
                           escape_regex(body.substr(placeholder + 3));
  return std::regex(expr);
}

std::string layer_kind_label(int layer, ProjectionKind kind) {
  return "layer " + std::to_string(layer) + " kind " + std::string(kind_name(kind));
}

} // namespace

NameSchema::NameSchema(std::vector<Entry> entries) : entries_(std::move(entries)) {
  compiled_.reserve(entries_.size());
  for (const auto& entry : entries_) compiled_.push_back(compile_template(entry.pattern));
}

NameSchema NameSchema::default_schema() {
  std::vector<Entry> entries;
  for (ProjectionKind kind : kAllKinds) {
    entries.push_back({"...layers.{i}." + std::string(kind_block(kind)) + "." +
                           std::string(kind_name(kind)) + "_proj.weight",
                       kind});
  }
  return NameSchema(std::move(entries));
}

NameSchema NameSchema::from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw Error(ErrorCode::InvalidConfig, "name schema must be a JSON object");
  std::vector<Entry> entries;
  for (const auto& [pattern, value] : doc.items()) {
    if (!value.is_string()) throw Error(ErrorCode::InvalidConfig, "kind must be a string");
    const auto kind = parse_kind(value.get<std::string>());
    if (!kind) throw Error(ErrorCode::InvalidConfig, "unknown projection kind " + value.dump());
    entries.push_back({pattern, *kind});
  }
  return NameSchema(std::move(entries));
}

std::optional<std::pair<int, ProjectionKind>> NameSchema::match(const std::string& tensor_name) const {
  std::smatch m;
  for (std::size_t i = 0; i < compiled_.size(); ++i) {
    if (std::regex_match(tensor_name, m, compiled_[i])) {
      return std::pair{std::stoi(m[1].str()), entries_[i].kind};
    }
  }
  return std::nullopt;
}

ModelWeights ModelWeights::from_matrices(std::string model_id, std::vector<ProjectionMatrix> matrices) {
  int max_layer = -1;
  for (const auto& m : matrices) {
    if (m.layer_index < 0) throw Error(ErrorCode::InvalidConfig, "negative layer index");
    if (m.rows() == 0 || m.cols() == 0) {
      throw Error(ErrorCode::ShapeMismatch, "empty matrix at " + layer_kind_label(m.layer_index, m.kind));
    }
    if (!m.values.allFinite()) {
      throw Error(ErrorCode::NonFinite, "NaN/Inf at " + layer_kind_label(m.layer_index, m.kind));
    }
    max_layer = std::max(max_layer, m.layer_index);
  }
  if (max_layer < 0) throw Error(ErrorCode::MissingProjection, "model has no projection matrices");

  ModelWeights model;
  model.model_id_ = std::move(model_id);
  model.num_layers_ = max_layer + 1;
  model.slots_.resize(static_cast<std::size_t>(model.num_layers_) * kNumKinds);
  for (auto& m : matrices) {
    auto& slot = model.slots_[static_cast<std::size_t>(m.layer_index) * kNumKinds + kind_index(m.kind)];
    if (slot.resident) {
      throw Error(ErrorCode::DuplicateName, "duplicate " + layer_kind_label(m.layer_index, m.kind));
    }
    slot.resident = std::make_shared<const Matrix>(std::move(m.values));
  }
  for (int layer = 0; layer < model.num_layers_; ++layer) {
    for (ProjectionKind kind : kAllKinds) {
      const auto& slot = model.slots_[static_cast<std::size_t>(layer) * kNumKinds + kind_index(kind)];
      if (!slot.resident) throw Error(ErrorCode::MissingProjection, layer_kind_label(layer, kind));
      const MatrixShape shape{slot.resident->rows(), slot.resident->cols()};
      auto& expected = model.shapes_[kind_index(kind)];
      if (layer == 0) {
        expected = shape;
      } else if (!(expected == shape)) {
        throw Error(ErrorCode::ShapeMismatch, layer_kind_label(layer, kind) + " differs from layer 0");
      }
    }
  }
  return model;
}

const ModelWeights::Slot& ModelWeights::slot(int layer, ProjectionKind kind) const {
  if (layer < 0 || layer >= num_layers_) {
    throw Error(ErrorCode::MissingProjection, "layer " + std::to_string(layer) + " out of range");
  }
  return slots_[static_cast<std::size_t>(layer) * kNumKinds + kind_index(kind)];
}

std::shared_ptr<const Matrix> ModelWeights::matrix(int layer, ProjectionKind kind) const {
  const Slot& s = slot(layer, kind);
  if (s.resident) return s.resident;
  auto values = std::make_shared<Matrix>(s.lazy->file->read_matrix(s.lazy->info));
  if (!values->allFinite()) {
    throw Error(ErrorCode::NonFinite, "NaN/Inf in tensor " + s.lazy->info.name);
  }
  return values;
}

std::string ModelWeights::source_name(int layer, ProjectionKind kind) const {
  const Slot& s = slot(layer, kind);
  return s.lazy ? s.lazy->info.name : std::string{};
}

bool ModelWeights::operator==(const ModelWeights& other) const {
  if (model_id_ != other.model_id_ || num_layers_ != other.num_layers_ || shapes_ != other.shapes_) {
    return false;
  }
  for (int layer = 0; layer < num_layers_; ++layer) {
    for (ProjectionKind kind : kAllKinds) {
      if (*matrix(layer, kind) != *other.matrix(layer, kind)) return false;
    }
  }
  return true;
}

ModelWeights load_model_weights(const std::filesystem::path& path, const NameSchema& schema) {
  namespace fs = std::filesystem;
  std::vector<fs::path> files;
  std::error_code ec;
  if (fs::is_directory(path, ec)) {
    for (const auto& entry : fs::directory_iterator(path, ec)) {
      if (entry.is_regular_file() && entry.path().extension() == ".safetensors") {
        files.push_back(entry.path());
      }
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw Error(ErrorCode::UnreadableFile, "no .safetensors files in " + path.string());
  } else if (fs::is_regular_file(path, ec)) {
    files.push_back(path);
  } else {
    throw Error(ErrorCode::UnreadableFile, "no such file or directory: " + path.string());
  }

  ModelWeights model;
  model.model_id_ = fs::is_directory(path) ? fs::absolute(path).lexically_normal().filename().string()
                                           : path.stem().string();
  if (model.model_id_.empty()) model.model_id_ = fs::absolute(path).parent_path().filename().string();

  std::map<std::pair<int, ProjectionKind>, ModelWeights::FileRef> found;
  for (const auto& file_path : files) {
    auto file = std::make_shared<const safetensors::File>(safetensors::File::open(file_path));
    for (const auto& [name, info] : file->tensors()) {
      const auto hit = schema.match(name);
      if (!hit) continue;
      if (found.contains(*hit)) {
        throw Error(ErrorCode::DuplicateName, "tensor for " + layer_kind_label(hit->first, hit->second) +
                                                  " appears more than once");
      }
      found.emplace(*hit, ModelWeights::FileRef{file, info});
    }
  }
  if (found.empty()) throw Error(ErrorCode::MissingProjection, "no projection tensors matched the name schema");

  int max_layer = 0;
  for (const auto& [key, ref] : found) max_layer = std::max(max_layer, key.first);
  model.num_layers_ = max_layer + 1;
  model.slots_.resize(static_cast<std::size_t>(model.num_layers_) * kNumKinds);

  for (int layer = 0; layer < model.num_layers_; ++layer) {
    for (ProjectionKind kind : kAllKinds) {
      const auto it = found.find({layer, kind});
      if (it == found.end()) throw Error(ErrorCode::MissingProjection, layer_kind_label(layer, kind));
      const auto& info = it->second.info;
      if (info.shape.size() != 2 || info.shape[0] <= 0 || info.shape[1] <= 0) {
        throw Error(ErrorCode::ShapeMismatch, info.name + " is not a non-empty 2-D tensor");
      }
      if (info.dtype == safetensors::DType::Other) {
        throw Error(ErrorCode::UnreadableFile, info.name + " has unsupported dtype " + info.dtype_label);
      }
      const MatrixShape shape{info.shape[0], info.shape[1]};
      auto& expected = model.shapes_[kind_index(kind)];
      if (layer == 0) {
        expected = shape;
      } else if (!(expected == shape)) {
        throw Error(ErrorCode::ShapeMismatch, layer_kind_label(layer, kind) + " differs from layer 0");
      }
      model.slots_[static_cast<std::size_t>(layer) * kNumKinds + kind_index(kind)].lazy = it->second;
    }
  }
  return model;
}

void emit_tensors(std::span<const safetensors::NamedTensor> tensors, const std::filesystem::path& path) {
  safetensors::write(path, tensors, safetensors::DType::F64);
}

void emit_tensors(const std::map<std::string, Matrix>& tensors, const std::filesystem::path& path) {
  std::vector<safetensors::NamedTensor> named(tensors.begin(), tensors.end());
  emit_tensors(named, path);
}

} // namespace wshape
