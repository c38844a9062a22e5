#pragma once

#include "wshape/characterizer.hpp"
#include "wshape/checkpoint.hpp"
#include "wshape/generator.hpp"
#include "wshape/types.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace wshape {

enum class LoraMode {
  PaperFaithful, // lora_A and lora_B both generated
  ZeroB,         // lora_A generated, lora_B all zeros
};

std::string_view lora_mode_name(LoraMode mode); // "paper", "zero-b"
std::optional<LoraMode> parse_lora_mode(std::string_view name);

enum class LoraRole { A, B };

struct KindDims {
  int out_dim = 0;
  int in_dim = 0;
};

struct LoraTargetSpec {
  std::string model_id;
  int num_layers = 0;
  std::map<ProjectionKind, KindDims> dims; // adapted kinds only
  int rank = 16;
  double alpha = 32.0;
  LoraMode mode = LoraMode::PaperFaithful;

  /// Throws ShapeError on non-positive sizes or an empty dims map.
  void validate() const;
  MatrixShape shape(ProjectionKind kind, LoraRole role) const;
};

/// Decoder-only target sized from its hidden, key/value and MLP widths.
LoraTargetSpec decoder_target(std::string model_id, int num_layers, int hidden, int kv_dim,
                              int intermediate, int rank = 16, double alpha = 32.0);

std::vector<std::string> lora_target_presets();
std::optional<LoraTargetSpec> lora_target_preset(const std::string& name);

nlohmann::json to_json(const LoraTargetSpec& spec);
/// `{"preset": name}` expands a preset; other fields override it.
LoraTargetSpec lora_target_from_json(const nlohmann::json& doc);

/// base_model.model.model.layers.{i}.<block>.<kind>_proj.lora_<A|B>.weight
std::string lora_tensor_name(int layer, ProjectionKind kind, LoraRole role);

struct LoraTensorId {
  int layer = 0;
  ProjectionKind kind = ProjectionKind::Q;
  LoraRole role = LoraRole::A;
};
std::optional<LoraTensorId> parse_lora_tensor_name(const std::string& name);

struct LoraManifest {
  std::string target_model_id;
  std::string reference_model_id;
  std::string table_digest;
  std::uint64_t seed = 0;
  LoraMode mode = LoraMode::PaperFaithful;
};

struct LoraInitBundle {
  std::map<std::string, Matrix> tensors;
  LoraManifest manifest;
  LoraTargetSpec target;
  std::vector<CharacteristicGroup> groups; // restricted to adapted kinds
  GeneratorConfig generator;
};

/// Supplies a template of the requested length for (group index, role), or
/// nothing to fall back to a Gaussian template.
using TemplateHook = std::function<std::optional<Vector>(std::size_t group, LoraRole role, int length)>;

struct ReshapeOptions {
  TemplateHook template_hook;
  unsigned threads = 0;
};

/// One template per (group, role), shared by every layer and member kind; the
/// lora_A template is drawn at the group's widest in_dim and truncated per
/// kind. Rows come from generate_row with the count law rescaled to the row
/// length. Each lora_A is then scaled to entry std 1/sqrt(in_dim), each
/// generated lora_B to 1/sqrt(rank), and values are rounded to float.
LoraInitBundle reshape_lora_init(const LoraTargetSpec& target, const CharacteristicTable& table,
                                 const GeneratorConfig& gen_cfg, std::uint64_t seed,
                                 const ReshapeOptions& options = {});

struct ShapeIssue {
  std::string tensor;
  std::string problem;
};

struct GroupCheck {
  CharacteristicGroup group;
  DistributionKind expected = DistributionKind::PowerLaw;
  std::optional<DistributionClass> cls; // empty when the pool could not be fitted
  std::string note;
  std::size_t rows_sampled = 0;

  bool passed() const { return cls && cls->kind == expected; }
};

struct BundleReport {
  std::vector<ShapeIssue> shape_issues;
  std::vector<GroupCheck> groups;
  bool zero_b_ok = true;
  std::string digest; // SHA-256 of the float32 safetensors bytes
  std::size_t tensor_count = 0;

  bool shapes_ok() const { return shape_issues.empty(); }
  bool groups_ok() const;
  bool passed() const { return shapes_ok() && groups_ok() && zero_b_ok; }
};

/// Rows pooled per group when checking its distance distribution.
inline constexpr std::size_t kGroupPoolRows = 256;

/// Shape audit against the bundle's target, ZeroB check, and per-group
/// classification of distances between lora_A rows of different tensors.
BundleReport validate_bundle(const LoraInitBundle& bundle, const CharacteristicTable& table);

nlohmann::json to_json(const LoraManifest& manifest);
nlohmann::json to_json(const BundleReport& report);

/// Float32 safetensors bytes of the bundle, as written by export_adapter.
std::vector<std::uint8_t> adapter_bytes(const LoraInitBundle& bundle);

/// Writes adapter_model.safetensors, adapter_manifest.json and
/// adapter_config.json into `dir`. Throws IncompleteTable on an empty bundle.
void export_adapter(const LoraInitBundle& bundle, const std::filesystem::path& dir);

/// Manifest JSON as written by export_adapter: provenance fields plus the
/// shape and SHA-256 of every tensor and of the adapter file.
nlohmann::json adapter_manifest(const LoraInitBundle& bundle);

/// Reads a directory written by export_adapter back into a bundle.
LoraInitBundle load_adapter(const std::filesystem::path& dir);

/// validate_bundle on the loaded adapter, plus a shape issue when the adapter
/// file no longer matches the digest recorded in its manifest.
BundleReport validate_adapter(const std::filesystem::path& dir, const CharacteristicTable& table);

inline constexpr const char* kAdapterFile = "adapter_model.safetensors";
inline constexpr const char* kAdapterManifestFile = "adapter_manifest.json";
inline constexpr const char* kAdapterConfigFile = "adapter_config.json";

} // namespace wshape
