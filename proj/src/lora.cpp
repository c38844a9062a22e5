#include "wshape/lora.hpp"
#include "wshape/digest.hpp"
#include "wshape/distance.hpp"
#include "wshape/error.hpp"
#include "wshape/parallel.hpp"
#include "wshape/random.hpp"
#include "wshape/safetensors.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <regex>

namespace wshape {

namespace {

using K = ProjectionKind;

constexpr std::string_view kPrefix = "base_model.model.model.layers.";

std::string_view role_name(LoraRole role) { return role == LoraRole::A ? "A" : "B"; }

void write_json(const std::filesystem::path& path, const nlohmann::json& doc) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << doc.dump(2) << '\n';
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
}

std::vector<std::uint8_t> float_bytes(const Matrix& m) {
  static_assert(std::endian::native == std::endian::little);
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(m.size()) * sizeof(float));
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    const float f = static_cast<float>(m.data()[i]);
    std::memcpy(bytes.data() + static_cast<std::size_t>(i) * sizeof(float), &f, sizeof(float));
  }
  return bytes;
}

void scale_to_std(Matrix& m, double target) {
  const double mean = m.mean();
  const double var = (m.array() - mean).square().mean();
  if (var > 0.0) m *= target / std::sqrt(var);
}

} // namespace

std::string_view lora_mode_name(LoraMode mode) { return mode == LoraMode::ZeroB ? "zero-b" : "paper"; }

std::optional<LoraMode> parse_lora_mode(std::string_view name) {
  if (name == "paper" || name == "paper-faithful" || name == "PaperFaithful") return LoraMode::PaperFaithful;
  if (name == "zero-b" || name == "zerob" || name == "ZeroB") return LoraMode::ZeroB;
  return std::nullopt;
}

void LoraTargetSpec::validate() const {
  if (num_layers < 1) throw Error(ErrorCode::ShapeError, "num_layers must be >= 1");
  if (rank < 1) throw Error(ErrorCode::ShapeError, "rank must be >= 1");
  if (dims.empty()) throw Error(ErrorCode::ShapeError, "no projection kinds to adapt");
  for (const auto& [kind, d] : dims) {
    if (d.out_dim < 1 || d.in_dim < 1) {
      throw Error(ErrorCode::ShapeError, "non-positive dims for " + std::string(kind_name(kind)));
    }
  }
  if (!std::isfinite(alpha)) throw Error(ErrorCode::ShapeError, "alpha must be finite");
}

MatrixShape LoraTargetSpec::shape(ProjectionKind kind, LoraRole role) const {
  auto it = dims.find(kind);
  if (it == dims.end()) throw Error(ErrorCode::ShapeError, std::string(kind_name(kind)) + " is not adapted");
  return role == LoraRole::A ? MatrixShape{rank, it->second.in_dim} : MatrixShape{it->second.out_dim, rank};
}

LoraTargetSpec decoder_target(std::string model_id, int num_layers, int hidden, int kv_dim, int intermediate,
                              int rank, double alpha) {
  LoraTargetSpec spec;
  spec.model_id = std::move(model_id);
  spec.num_layers = num_layers;
  spec.rank = rank;
  spec.alpha = alpha;
  spec.dims = {
      {K::Q, {hidden, hidden}},          {K::K, {kv_dim, hidden}},
      {K::V, {kv_dim, hidden}},          {K::O, {hidden, hidden}},
      {K::Gate, {intermediate, hidden}}, {K::Up, {intermediate, hidden}},
      {K::Down, {hidden, intermediate}},
  };
  return spec;
}

namespace {

const std::vector<LoraTargetSpec>& target_presets() {
  static const std::vector<LoraTargetSpec> table = {
      decoder_target("llama-3.2-1b", 16, 2048, 512, 8192),
      decoder_target("llama-3.2-3b", 28, 3072, 1024, 8192),
      decoder_target("llama-3.2-8b", 32, 4096, 1024, 14336),
      decoder_target("smollm2-135m", 30, 576, 192, 1536),
      decoder_target("smollm2-1.7b", 24, 2048, 2048, 8192),
  };
  return table;
}

} // namespace

std::vector<std::string> lora_target_presets() {
  std::vector<std::string> names;
  for (const auto& spec : target_presets()) names.push_back(spec.model_id);
  return names;
}

std::optional<LoraTargetSpec> lora_target_preset(const std::string& name) {
  for (const auto& spec : target_presets()) {
    if (spec.model_id == name) return spec;
  }
  return std::nullopt;
}

nlohmann::json to_json(const LoraTargetSpec& spec) {
  nlohmann::json dims = nlohmann::json::object();
  for (const auto& [kind, d] : spec.dims) dims[std::string(kind_name(kind))] = {d.out_dim, d.in_dim};
  return {
      {"model_id", spec.model_id}, {"num_layers", spec.num_layers}, {"rank", spec.rank},
      {"alpha", spec.alpha},       {"mode", lora_mode_name(spec.mode)}, {"dims", dims},
  };
}

LoraTargetSpec lora_target_from_json(const nlohmann::json& doc) {
  LoraTargetSpec spec;
  try {
    if (doc.contains("preset")) {
      const auto name = doc.at("preset").get<std::string>();
      auto preset = lora_target_preset(name);
      if (!preset) throw Error(ErrorCode::InvalidConfig, "unknown target preset " + name);
      spec = *preset;
    }
    spec.model_id = doc.value("model_id", spec.model_id);
    spec.num_layers = doc.value("num_layers", spec.num_layers);
    spec.rank = doc.value("rank", spec.rank);
    spec.alpha = doc.value("alpha", spec.alpha);
    if (doc.contains("mode")) {
      const auto name = doc.at("mode").get<std::string>();
      auto mode = parse_lora_mode(name);
      if (!mode) throw Error(ErrorCode::InvalidConfig, "unknown mode " + name);
      spec.mode = *mode;
    }
    if (doc.contains("dims")) {
      spec.dims.clear();
      for (const auto& [key, value] : doc.at("dims").items()) {
        auto kind = parse_kind(key);
        if (!kind) throw Error(ErrorCode::InvalidConfig, "unknown projection kind " + key);
        if (!value.is_array() || value.size() != 2) {
          throw Error(ErrorCode::ShapeError, "dims." + key + " must be [out_dim, in_dim]");
        }
        spec.dims[*kind] = {value[0].get<int>(), value[1].get<int>()};
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("target spec: ") + e.what());
  }
  spec.validate();
  return spec;
}

std::string lora_tensor_name(int layer, ProjectionKind kind, LoraRole role) {
  return std::string(kPrefix) + std::to_string(layer) + "." + std::string(kind_block(kind)) + "." +
         std::string(kind_name(kind)) + "_proj.lora_" + std::string(role_name(role)) + ".weight";
}

std::optional<LoraTensorId> parse_lora_tensor_name(const std::string& name) {
  static const std::regex pattern(
      R"(base_model\.model\.model\.layers\.(\d+)\.(self_attn|mlp)\.(\w+)_proj\.lora_(A|B)\.weight)");
  std::smatch m;
  if (!std::regex_match(name, m, pattern)) return std::nullopt;
  auto kind = parse_kind(m[3].str());
  if (!kind || kind_block(*kind) != m[2].str()) return std::nullopt;
  return LoraTensorId{std::stoi(m[1].str()), *kind, m[4].str() == "A" ? LoraRole::A : LoraRole::B};
}

LoraInitBundle reshape_lora_init(const LoraTargetSpec& target, const CharacteristicTable& table,
                                 const GeneratorConfig& gen_cfg, std::uint64_t seed,
                                 const ReshapeOptions& options) {
  target.validate();
  gen_cfg.validate();

  LoraInitBundle bundle;
  bundle.target = target;
  bundle.generator = gen_cfg;
  bundle.manifest = {target.model_id, table.model_id, table_digest(table), seed, target.mode};

  // Restrict groups to adapted kinds; a group whose reference is not adapted
  // keeps its first adapted member as the template owner.
  std::array<int, kNumKinds> group_of{};
  group_of.fill(-1);
  for (const auto& g : table.groups) {
    std::vector<ProjectionKind> kinds{g.reference};
    kinds.insert(kinds.end(), g.members.begin(), g.members.end());
    std::vector<ProjectionKind> adapted;
    for (ProjectionKind k : kinds) {
      if (target.dims.contains(k)) adapted.push_back(k);
    }
    if (adapted.empty()) continue;
    for (ProjectionKind k : adapted) {
      if (group_of[kind_index(k)] >= 0) {
        throw Error(ErrorCode::IncompleteTable, std::string(kind_name(k)) + " appears in two groups");
      }
      group_of[kind_index(k)] = static_cast<int>(bundle.groups.size());
    }
    bundle.groups.push_back({adapted.front(), {adapted.begin() + 1, adapted.end()}});
  }
  for (const auto& [kind, d] : target.dims) {
    if (group_of[kind_index(kind)] < 0) {
      throw Error(ErrorCode::IncompleteTable, "table has no group for " + std::string(kind_name(kind)));
    }
  }

  auto make_template = [&](std::size_t g, LoraRole role, int length) -> Vector {
    if (options.template_hook) {
      if (auto t = options.template_hook(g, role, length)) {
        if (t->size() != length) throw Error(ErrorCode::LengthMismatch, "template hook returned wrong length");
        return *t;
      }
    }
    GeneratorConfig cfg = gen_cfg;
    cfg.n = length;
    cfg.seed = keyed_stream(seed, {label_key("lora-template"), g, static_cast<std::uint64_t>(role)})();
    return generate_template(cfg);
  };

  const bool generate_b = target.mode == LoraMode::PaperFaithful;
  std::vector<Vector> templates_a(bundle.groups.size());
  std::vector<Vector> templates_b(bundle.groups.size());
  for (std::size_t g = 0; g < bundle.groups.size(); ++g) {
    int widest = 0;
    for (const auto& [kind, d] : target.dims) {
      if (group_of[kind_index(kind)] == static_cast<int>(g)) widest = std::max(widest, d.in_dim);
    }
    templates_a[g] = make_template(g, LoraRole::A, widest);
    if (generate_b) templates_b[g] = make_template(g, LoraRole::B, target.rank);
  }

  struct Task {
    int layer;
    ProjectionKind kind;
    LoraRole role;
  };
  std::vector<Task> tasks;
  for (int layer = 0; layer < target.num_layers; ++layer) {
    for (const auto& [kind, d] : target.dims) {
      tasks.push_back({layer, kind, LoraRole::A});
      tasks.push_back({layer, kind, LoraRole::B});
    }
  }

  std::vector<Matrix> results(tasks.size());
  parallel_for(
      tasks.size(),
      [&](std::size_t t) {
        const Task& task = tasks[t];
        const KindDims& d = target.dims.at(task.kind);
        const auto g = static_cast<std::size_t>(group_of[kind_index(task.kind)]);
        Matrix& out = results[t];
        if (task.role == LoraRole::B && !generate_b) {
          out = Matrix::Zero(d.out_dim, target.rank);
          return;
        }
        const bool is_a = task.role == LoraRole::A;
        const int rows = is_a ? target.rank : d.out_dim;
        const int length = is_a ? d.in_dim : target.rank;
        const Vector tmpl = is_a ? Vector(templates_a[g].head(length)) : templates_b[g];
        const CountLaw law = gen_cfg.count_law.rescaled(static_cast<double>(length) / gen_cfg.n);
        auto rng = keyed_stream(seed, {label_key("lora-rows"), static_cast<std::uint64_t>(task.role),
                                       kind_index(task.kind), static_cast<std::uint64_t>(task.layer)});
        out.resize(rows, length);
        for (int i = 0; i < rows; ++i) {
          out.row(i) = generate_row(tmpl, law, gen_cfg.increment_mu, gen_cfg.increment_sigma, rng).values.transpose();
        }
        scale_to_std(out, 1.0 / std::sqrt(static_cast<double>(length)));
        out = out.cast<float>().cast<double>();
      },
      options.threads);

  for (std::size_t t = 0; t < tasks.size(); ++t) {
    bundle.tensors.emplace(lora_tensor_name(tasks[t].layer, tasks[t].kind, tasks[t].role), std::move(results[t]));
  }
  return bundle;
}

bool BundleReport::groups_ok() const {
  return std::all_of(groups.begin(), groups.end(), [](const GroupCheck& g) { return g.passed(); });
}

namespace {

GroupCheck check_group(const LoraInitBundle& bundle, const CharacteristicGroup& group, DistributionKind expected) {
  GroupCheck check;
  check.group = group;
  check.expected = expected;

  std::vector<ProjectionKind> kinds{group.reference};
  kinds.insert(kinds.end(), group.members.begin(), group.members.end());
  std::vector<const Matrix*> tensors;
  Eigen::Index length = std::numeric_limits<Eigen::Index>::max();
  for (ProjectionKind k : kinds) {
    for (int layer = 0; layer < bundle.target.num_layers; ++layer) {
      auto it = bundle.tensors.find(lora_tensor_name(layer, k, LoraRole::A));
      if (it == bundle.tensors.end()) continue;
      tensors.push_back(&it->second);
      length = std::min(length, it->second.cols());
    }
  }
  if (tensors.empty()) {
    check.note = "no lora_A tensors for this group";
    return check;
  }

  const std::size_t per_tensor = (kGroupPoolRows + tensors.size() - 1) / tensors.size();
  std::vector<Vector> rows;
  std::vector<std::size_t> owner;
  for (std::size_t t = 0; t < tensors.size(); ++t) {
    const auto take = std::min<std::size_t>(per_tensor, static_cast<std::size_t>(tensors[t]->rows()));
    for (std::size_t i = 0; i < take; ++i) {
      rows.push_back(tensors[t]->row(static_cast<Eigen::Index>(i)).head(length).transpose());
      owner.push_back(t);
    }
  }
  check.rows_sampled = rows.size();

  DsvSamples pool;
  pool.source = "lora-a-" + std::string(kind_name(group.reference));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = i + 1; j < rows.size(); ++j) {
      if (owner[i] == owner[j]) continue;
      try {
        const double d = cosine_distance(rows[i], rows[j]);
        if (d != 0.0) pool.values.push_back(d);
      } catch (const Error&) {
        // zero rows carry no direction
      }
    }
  }
  pool.zeros_removed = true;
  try {
    check.cls = classify_distribution(pool);
  } catch (const Error& e) {
    check.note = e.what();
  }
  return check;
}

} // namespace

BundleReport validate_bundle(const LoraInitBundle& bundle, const CharacteristicTable& table) {
  BundleReport report;
  report.tensor_count = bundle.tensors.size();
  const LoraTargetSpec& target = bundle.target;

  std::map<std::string, MatrixShape> expected;
  for (int layer = 0; layer < target.num_layers; ++layer) {
    for (const auto& [kind, d] : target.dims) {
      for (LoraRole role : {LoraRole::A, LoraRole::B}) {
        expected[lora_tensor_name(layer, kind, role)] = target.shape(kind, role);
      }
    }
  }
  for (const auto& [name, shape] : expected) {
    auto it = bundle.tensors.find(name);
    if (it == bundle.tensors.end()) {
      report.shape_issues.push_back({name, "missing"});
      continue;
    }
    const Matrix& m = it->second;
    if (m.rows() != shape.rows || m.cols() != shape.cols) {
      report.shape_issues.push_back({name, "shape " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                                               ", expected " + std::to_string(shape.rows) + "x" +
                                               std::to_string(shape.cols)});
    }
    if (!m.allFinite()) report.shape_issues.push_back({name, "non-finite values"});
  }
  for (const auto& [name, m] : bundle.tensors) {
    if (!expected.contains(name)) report.shape_issues.push_back({name, "unexpected tensor"});
    if (target.mode == LoraMode::ZeroB) {
      auto id = parse_lora_tensor_name(name);
      if (id && id->role == LoraRole::B && !(m.array() == 0.0).all()) report.zero_b_ok = false;
    }
  }

  // Checks run on the bundle's own groups; the table is only used to confirm
  // it is the one the bundle was built from.
  if (!table.groups.empty() && table_digest(table) != bundle.manifest.table_digest) {
    report.shape_issues.push_back({"<manifest>", "characteristic table digest does not match"});
  }
  const DistributionKind expected_kind = expected_class(bundle.generator.count_law);
  for (const auto& group : bundle.groups) report.groups.push_back(check_group(bundle, group, expected_kind));

  try {
    report.digest = sha256_hex(adapter_bytes(bundle));
  } catch (const Error& e) {
    report.shape_issues.push_back({"<bundle>", e.what()});
  }
  return report;
}

nlohmann::json to_json(const LoraManifest& manifest) {
  return {
      {"target_model_id", manifest.target_model_id},
      {"reference_model_id", manifest.reference_model_id},
      {"table_digest", manifest.table_digest},
      {"seed", manifest.seed},
      {"mode", lora_mode_name(manifest.mode)},
  };
}

nlohmann::json to_json(const BundleReport& report) {
  nlohmann::json issues = nlohmann::json::array();
  for (const auto& issue : report.shape_issues) issues.push_back({{"tensor", issue.tensor}, {"problem", issue.problem}});
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& g : report.groups) {
    nlohmann::json members = nlohmann::json::array();
    for (ProjectionKind m : g.group.members) members.push_back(kind_name(m));
    nlohmann::json entry = {
        {"reference", kind_name(g.group.reference)},
        {"members", members},
        {"expected", distribution_kind_name(g.expected)},
        {"rows_sampled", g.rows_sampled},
        {"passed", g.passed()},
    };
    entry["classification"] = g.cls ? to_json(*g.cls) : nlohmann::json();
    if (!g.note.empty()) entry["note"] = g.note;
    groups.push_back(std::move(entry));
  }
  return {
      {"passed", report.passed()},
      {"tensor_count", report.tensor_count},
      {"shape_issues", issues},
      {"zero_b_ok", report.zero_b_ok},
      {"groups", groups},
      {"digest", report.digest},
  };
}

std::vector<std::uint8_t> adapter_bytes(const LoraInitBundle& bundle) {
  if (bundle.tensors.empty()) throw Error(ErrorCode::IncompleteTable, "bundle has no tensors");
  std::vector<safetensors::NamedTensor> named(bundle.tensors.begin(), bundle.tensors.end());
  return safetensors::serialize(named, safetensors::DType::F32, {{"format", "pt"}});
}

nlohmann::json adapter_manifest(const LoraInitBundle& bundle) {
  nlohmann::json tensors = nlohmann::json::object();
  for (const auto& [name, m] : bundle.tensors) {
    tensors[name] = {{"shape", {m.rows(), m.cols()}}, {"sha256", sha256_hex(float_bytes(m))}};
  }
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& g : bundle.groups) {
    nlohmann::json members = nlohmann::json::array();
    for (ProjectionKind m : g.members) members.push_back(kind_name(m));
    groups.push_back({{"reference", kind_name(g.reference)}, {"members", members}});
  }
  nlohmann::json doc = to_json(bundle.manifest);
  doc["rank"] = bundle.target.rank;
  doc["alpha"] = bundle.target.alpha;
  doc["num_layers"] = bundle.target.num_layers;
  doc["target"] = to_json(bundle.target);
  doc["groups"] = groups;
  doc["generator"] = to_json(bundle.generator);
  doc["adapter_file"] = kAdapterFile;
  doc["adapter_sha256"] = sha256_hex(adapter_bytes(bundle));
  doc["tensors"] = tensors;
  return doc;
}

void export_adapter(const LoraInitBundle& bundle, const std::filesystem::path& dir) {
  const auto bytes = adapter_bytes(bundle);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + dir.string() + ": " + ec.message());

  {
    std::ofstream out(dir / kAdapterFile, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + (dir / kAdapterFile).string());
  }
  write_json(dir / kAdapterManifestFile, adapter_manifest(bundle));

  nlohmann::json modules = nlohmann::json::array();
  for (const auto& [kind, d] : bundle.target.dims) modules.push_back(std::string(kind_name(kind)) + "_proj");
  write_json(dir / kAdapterConfigFile, {
                                           {"peft_type", "LORA"},
                                           {"task_type", "CAUSAL_LM"},
                                           {"base_model_name_or_path", bundle.target.model_id},
                                           {"r", bundle.target.rank},
                                           {"lora_alpha", bundle.target.alpha},
                                           {"lora_dropout", 0.0},
                                           {"bias", "none"},
                                           {"fan_in_fan_out", false},
                                           {"inference_mode", false},
                                           {"init_lora_weights", true},
                                           {"target_modules", modules},
                                       });
}

namespace {

nlohmann::json read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::UnreadableFile, "cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, path.string() + ": " + e.what());
  }
}

} // namespace

LoraInitBundle load_adapter(const std::filesystem::path& dir) {
  const nlohmann::json doc = read_manifest(dir / kAdapterManifestFile);
  LoraInitBundle bundle;
  try {
    bundle.target = lora_target_from_json(doc.at("target"));
    bundle.generator = generator_config_from_json(doc.at("generator"));
    bundle.manifest.target_model_id = doc.at("target_model_id").get<std::string>();
    bundle.manifest.reference_model_id = doc.at("reference_model_id").get<std::string>();
    bundle.manifest.table_digest = doc.at("table_digest").get<std::string>();
    bundle.manifest.seed = doc.at("seed").get<std::uint64_t>();
    bundle.manifest.mode = bundle.target.mode;
    auto kind_of = [](const nlohmann::json& v) {
      auto kind = parse_kind(v.get<std::string>());
      if (!kind) throw Error(ErrorCode::InvalidConfig, "unknown projection kind in adapter manifest");
      return *kind;
    };
    for (const auto& g : doc.at("groups")) {
      CharacteristicGroup group{kind_of(g.at("reference")), {}};
      for (const auto& m : g.at("members")) group.members.push_back(kind_of(m));
      bundle.groups.push_back(group);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("adapter manifest: ") + e.what());
  }
  const safetensors::File file = safetensors::File::open(dir / kAdapterFile);
  for (const auto& [name, info] : file.tensors()) bundle.tensors.emplace(name, file.read_matrix(info));
  return bundle;
}

BundleReport validate_adapter(const std::filesystem::path& dir, const CharacteristicTable& table) {
  BundleReport report = validate_bundle(load_adapter(dir), table);
  const nlohmann::json doc = read_manifest(dir / kAdapterManifestFile);
  if (sha256_file(dir / kAdapterFile) != doc.value("adapter_sha256", "")) {
    report.shape_issues.push_back({kAdapterFile, "file digest differs from the manifest"});
  }
  return report;
}

} // namespace wshape
