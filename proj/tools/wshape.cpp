#include "wshape/characterizer.hpp"
#include "wshape/checkpoint.hpp"
#include "wshape/digest.hpp"
#include "wshape/distance.hpp"
#include "wshape/error.hpp"
#include "wshape/generator.hpp"
#include "wshape/lora.hpp"
#include "wshape/report.hpp"
#include "wshape/safetensors.hpp"
#include "wshape/spectral.hpp"
#include "wshape/stats.hpp"

#include "CLI11.hpp"

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace wshape;

namespace {

constexpr int kExitError = 2;
constexpr int kExitValidation = 3;

constexpr int kHistogramBins = 50;
constexpr int kPolarSectors = 36;

struct Common {
  int rank = kDefaultRank;
  std::uint64_t seed = 0;
  std::string out = ".";
  unsigned threads = 0;
  std::string svd = "auto";
  std::string schema_path;
  bool clamp_rank = false;
  std::vector<std::string> argv;
};

class ValidationFailed : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

fs::path resolve_model(const std::string& arg) {
  if (fs::exists(arg)) return arg;
  if (const char* cache = std::getenv("WSHAPE_CACHE")) {
    const fs::path candidate = fs::path(cache) / arg;
    if (fs::exists(candidate)) return candidate;
  }
  throw Error(ErrorCode::UnreadableFile, "model '" + arg + "' not found (also looked under $WSHAPE_CACHE)");
}

SvdOptions svd_options(const Common& c) {
  SvdOptions opts;
  opts.threads = c.threads;
  if (c.svd == "dense") opts.method = SvdMethod::Dense;
  else if (c.svd == "subspace") opts.method = SvdMethod::Subspace;
  return opts;
}

NameSchema name_schema(const Common& c) {
  if (c.schema_path.empty()) return NameSchema::default_schema();
  return NameSchema::from_json(read_json_file(c.schema_path));
}

struct LoadedModel {
  fs::path path;
  ModelWeights weights;
  std::vector<Msv> msvs;
  int rank = 0;
};

LoadedModel load_and_decompose(const std::string& arg, const Common& c) {
  LoadedModel m{resolve_model(arg), ModelWeights{}, {}, c.rank};
  m.weights = load_model_weights(m.path, name_schema(c));
  if (c.clamp_rank) m.rank = std::min(m.rank, max_rank(m.weights));
  std::cerr << "decomposing " << m.weights.num_layers() << " layers x 7 projections at rank " << m.rank << "\n";
  m.msvs = build_all_msvs(m.weights, m.rank, svd_options(c));
  return m;
}

RunManifest start_manifest(const std::string& command, const Common& c) {
  RunManifest manifest;
  manifest.command = command;
  manifest.arguments = c.argv;
  manifest.created_at = utc_timestamp();
  return manifest;
}

void finish(RunManifest& manifest, const fs::path& dir, const std::vector<std::string>& files) {
  for (const auto& f : files) manifest.add_output(dir, f);
  manifest.write(dir);
}

nlohmann::json class_json(const DsvSamples& pool) {
  nlohmann::json out = {{"sample_count", pool.size()}};
  try {
    out["pareto"] = to_json(fit_pareto(pool));
    out["normal"] = to_json(fit_normal(pool));
    out["classification"] = to_json(classify_distribution(pool));
  } catch (const Error& e) {
    if (e.code() != ErrorCode::TooFewSamples && e.code() != ErrorCode::DegenerateSamples) throw;
    out["failure"] = e.what();
  }
  return out;
}

void write_histograms(const DsvSamples& pool, const fs::path& dir, std::vector<std::string>& files) {
  const Histogram h = histogram(pool, kHistogramBins);
  CsvWriter hist(dir / "histogram.csv", {"bin_low", "bin_high", "count", "density"});
  for (std::size_t i = 0; i < h.counts.size(); ++i) {
    hist.cell(h.edges[i]).cell(h.edges[i + 1]).cell(static_cast<long long>(h.counts[i])).cell(h.density[i]);
    hist.end_row();
  }
  hist.close();
  files.push_back("histogram.csv");

  const PolarHistogram p = polar_histogram(pool, kPolarSectors);
  CsvWriter polar(dir / "polar.csv", {"sector_start_degrees", "count"});
  for (std::size_t i = 0; i < p.counts.size(); ++i) {
    polar.cell(p.sector_start_degrees[i]).cell(static_cast<long long>(p.counts[i]));
    polar.end_row();
  }
  polar.close();
  files.push_back("polar.csv");
}

int cmd_analyze(const std::string& model_arg, const Common& c) {
  const fs::path dir = c.out;
  fs::create_directories(dir);
  RunManifest manifest = start_manifest("analyze", c);
  LoadedModel model = load_and_decompose(model_arg, c);
  manifest.add_input(model.path);
  manifest.config = {{"rank", model.rank}, {"svd", c.svd}};
  const std::string run = manifest.run_digest();
  std::vector<std::string> files;

  std::vector<safetensors::NamedTensor> msv_tensors;
  CsvWriter msv_csv(dir / "msv.csv", [&] {
    std::vector<std::string> header{"kind", "layer"};
    for (int j = 0; j < model.rank; ++j) header.push_back("sv_" + std::to_string(j));
    return header;
  }());
  for (const Msv& m : model.msvs) {
    msv_tensors.emplace_back(std::string(kind_name(m.kind)), m.as_matrix());
    for (const SvVector& row : m.rows) {
      msv_csv.cell(std::string(kind_name(m.kind))).cell(static_cast<long long>(row.layer_index));
      for (Eigen::Index j = 0; j < row.values.size(); ++j) msv_csv.cell(row.values(j));
      msv_csv.end_row();
    }
  }
  msv_csv.close();
  safetensors::write(dir / "msv.safetensors", msv_tensors, safetensors::DType::F64, {{"run_digest", run}});
  files.insert(files.end(), {"msv.csv", "msv.safetensors"});

  nlohmann::json pools = nlohmann::json::object();
  CsvWriter pool_csv(dir / "dsv_pools.csv", {"pool", "value"});
  for (std::size_t a = 0; a < model.msvs.size(); ++a) {
    for (std::size_t b = a; b < model.msvs.size(); ++b) {
      DsvSamples pool = remove_zeros(pairwise_dsv(model.msvs[a], model.msvs[b]));
      for (double v : pool.values) pool_csv.cell(pool.source).cell(v).end_row();
      pools[pool.source] = class_json(pool);
    }
  }
  pool_csv.close();
  files.push_back("dsv_pools.csv");

  const DsvSamples all = all_pairs_dsv(model.msvs);
  CsvWriter all_csv(dir / "dsv_all_pairs.csv", {"value"});
  for (double v : all.values) all_csv.cell(v).end_row();
  all_csv.close();
  files.push_back("dsv_all_pairs.csv");
  write_histograms(all, dir, files);

  const Matrix sim = similarity_matrix(model.msvs);
  CsvWriter sim_csv(dir / "similarity.csv", {});
  for (Eigen::Index i = 0; i < sim.rows(); ++i) {
    for (Eigen::Index j = 0; j < sim.cols(); ++j) sim_csv.cell(sim(i, j));
    sim_csv.end_row();
  }
  sim_csv.close();
  files.push_back("similarity.csv");

  nlohmann::json all_json = class_json(all);
  nlohmann::json summary = {
      {"model_id", model.weights.model_id()},
      {"num_layers", model.weights.num_layers()},
      {"rank", model.rank},
      {"run_digest", run},
      {"alpha", all_json.contains("pareto") ? all_json["pareto"]["alpha"] : nlohmann::json()},
      {"all_pairs", all_json},
      {"pools", pools},
  };
  write_json_file(dir / "summary.json", summary);
  files.push_back("summary.json");
  finish(manifest, dir, files);

  std::cout << "model " << model.weights.model_id() << ": " << all.size() << " distances";
  if (all_json.contains("pareto")) std::cout << ", alpha " << all_json["pareto"]["alpha"].get<double>();
  if (all_json.contains("classification")) std::cout << ", " << all_json["classification"]["class"].get<std::string>();
  std::cout << "\n";
  return 0;
}

ReferenceOrder order_from(const std::string& preset, const std::string& order_text) {
  if (!order_text.empty()) {
    ReferenceOrder partial;
    std::stringstream in(order_text);
    for (std::string item; std::getline(in, item, ',');) {
      auto kind = parse_kind(item);
      if (!kind) throw CLI::ValidationError("--order", "unknown projection kind '" + item + "'");
      partial.push_back(*kind);
    }
    return complete_reference_order(partial);
  }
  auto order = reference_order_preset(preset);
  if (!order) throw CLI::ValidationError("--preset", "unknown preset '" + preset + "'");
  return *order;
}

int cmd_characterize(const std::string& model_arg, const std::string& preset, const std::string& order_text,
                     const Common& c) {
  const ReferenceOrder order = order_from(preset, order_text);
  const fs::path dir = c.out;
  fs::create_directories(dir);
  RunManifest manifest = start_manifest("characterize", c);
  LoadedModel model = load_and_decompose(model_arg, c);
  manifest.add_input(model.path);
  nlohmann::json order_json = nlohmann::json::array();
  for (ProjectionKind k : order) order_json.push_back(kind_name(k));
  manifest.config = {{"rank", model.rank}, {"svd", c.svd}, {"reference_order", order_json}};

  const CharacteristicTable table = characterize_model(model.msvs, order, model.weights.model_id(), c.threads);
  nlohmann::json doc = to_json(table);
  doc["run_digest"] = manifest.run_digest();
  write_json_file(dir / "characteristic_table.json", doc);
  finish(manifest, dir, {"characteristic_table.json"});

  std::cout << table.model_id << " (rank " << table.rank << ")\n";
  for (const auto& g : table.groups) {
    std::cout << "  reference " << kind_name(g.reference) << ":";
    if (g.members.empty()) std::cout << " ---";
    for (ProjectionKind m : g.members) std::cout << " " << kind_name(m);
    std::cout << "\n";
  }
  return 0;
}

GeneratorConfig load_generator_config(const std::string& path, const std::string& family) {
  if (!path.empty()) return generator_config_from_json(read_json_file(path));
  if (!family.empty()) return default_generator_config(family);
  return GeneratorConfig{};
}

int cmd_generate(const std::string& cfg_path, const std::string& family, const Common& c) {
  GeneratorConfig cfg = load_generator_config(cfg_path, family);
  cfg.seed = c.seed;
  const fs::path dir = c.out;
  fs::create_directories(dir);
  RunManifest manifest = start_manifest("generate", c);
  if (!cfg_path.empty()) manifest.add_input(cfg_path);
  manifest.seed = c.seed;
  manifest.config = to_json(cfg);
  const std::string run = manifest.run_digest();

  const GeneratedPair pair = generate_pair_and_validate(cfg);
  std::vector<safetensors::NamedTensor> tensors{
      {"A", pair.a}, {"B", pair.b}, {"template", Matrix(pair.template_row.transpose())}};
  safetensors::write(dir / "matrices.safetensors", tensors, safetensors::DType::F64, {{"run_digest", run}});
  std::vector<std::string> files{"matrices.safetensors"};

  CsvWriter dsv(dir / "dsv.csv", {"value"});
  for (double v : pair.pool.values) dsv.cell(v).end_row();
  dsv.close();
  files.push_back("dsv.csv");
  if (!pair.pool.values.empty()) write_histograms(pair.pool, dir, files);

  std::string law_label(count_law_name(cfg.count_law.type));
  law_label[0] = static_cast<char>(std::toupper(law_label[0]));
  const DistributionKind expected = expected_class(cfg.count_law);
  const bool passed = pair.classification && pair.classification->kind == expected;
  nlohmann::json report = {
      {"experiment", "Gaussian+" + law_label},
      {"config", to_json(cfg)},
      {"run_digest", run},
      {"pool_size", pair.pool.size()},
      {"expected", distribution_kind_name(expected)},
      {"classification", pair.classification ? to_json(*pair.classification) : nlohmann::json()},
      {"passed", passed},
  };
  if (!pair.failure.empty()) report["failure"] = pair.failure;
  if (pair.classification) report["pareto"] = to_json(fit_pareto(pair.pool));
  write_json_file(dir / "report.json", report);
  files.push_back("report.json");
  finish(manifest, dir, files);

  std::cout << report["experiment"].get<std::string>() << ": ";
  if (pair.classification) {
    std::cout << distribution_kind_name(pair.classification->kind) << " (expected "
              << distribution_kind_name(expected) << ")\n";
  } else {
    std::cout << pair.failure << "\n";
  }
  if (!passed) throw ValidationFailed("generated pool does not classify as expected");
  return 0;
}

LoraTargetSpec load_target(const std::string& path, const std::string& preset) {
  if (!path.empty()) return lora_target_from_json(read_json_file(path));
  auto spec = lora_target_preset(preset);
  if (!spec) throw CLI::ValidationError("--target-preset", "unknown target preset '" + preset + "'");
  return *spec;
}

void print_report(const BundleReport& report) {
  std::cout << "shape audit: " << (report.shapes_ok() ? "ok" : "FAILED") << " (" << report.tensor_count
            << " tensors)\n";
  for (const auto& issue : report.shape_issues) std::cout << "  " << issue.tensor << ": " << issue.problem << "\n";
  for (const auto& g : report.groups) {
    std::cout << "group " << kind_name(g.group.reference) << ": ";
    if (g.cls) {
      std::cout << distribution_kind_name(g.cls->kind);
    } else {
      std::cout << "unfitted (" << g.note << ")";
    }
    std::cout << ", expected " << distribution_kind_name(g.expected) << "\n";
  }
  if (!report.zero_b_ok) std::cout << "lora_B is not all zeros\n";
  std::cout << "digest " << report.digest << "\n";
}

int cmd_reshape(const std::string& table_path, const std::string& target_path, const std::string& target_preset,
                const std::string& gen_path, const std::string& mode_text, int lora_rank, const Common& c) {
  const CharacteristicTable table = characteristic_table_from_json(read_json_file(table_path));
  LoraTargetSpec target = load_target(target_path, target_preset);
  if (!mode_text.empty()) target.mode = *parse_lora_mode(mode_text);
  if (lora_rank > 0) target.rank = lora_rank;
  const GeneratorConfig gen = load_generator_config(gen_path, "");

  const fs::path dir = c.out;
  RunManifest manifest = start_manifest("reshape", c);
  manifest.add_input(table_path);
  if (!target_path.empty()) manifest.add_input(target_path);
  if (!gen_path.empty()) manifest.add_input(gen_path);
  manifest.seed = c.seed;
  manifest.config = {{"target", to_json(target)}, {"generator", to_json(gen)}};

  const LoraInitBundle bundle = reshape_lora_init(target, table, gen, c.seed, {{}, c.threads});
  export_adapter(bundle, dir);
  const BundleReport report = validate_bundle(bundle, table);
  nlohmann::json report_json = to_json(report);
  report_json["run_digest"] = manifest.run_digest();
  write_json_file(dir / "validation_report.json", report_json);
  finish(manifest, dir, {kAdapterFile, kAdapterManifestFile, kAdapterConfigFile, "validation_report.json"});

  std::cout << "adapter for " << target.model_id << " from " << table.model_id << " table, mode "
            << lora_mode_name(target.mode) << ", seed " << c.seed << "\n";
  print_report(report);
  if (!report.passed()) throw ValidationFailed("bundle validation failed");
  return 0;
}

int cmd_validate(const std::string& adapter_dir, const std::string& table_path, const Common& c) {
  const fs::path dir = adapter_dir;
  const CharacteristicTable table = characteristic_table_from_json(read_json_file(table_path));
  const BundleReport report = validate_adapter(dir, table);
  nlohmann::json out = to_json(report);
  out["adapter_dir"] = dir.string();
  if (c.out != ".") {
    fs::create_directories(c.out);
    RunManifest manifest = start_manifest("validate", c);
    manifest.add_input(dir / kAdapterFile);
    manifest.add_input(table_path);
    out["run_digest"] = manifest.run_digest();
    write_json_file(fs::path(c.out) / "validation_report.json", out);
    finish(manifest, c.out, {"validation_report.json"});
  }
  print_report(report);
  if (!report.passed()) throw ValidationFailed("bundle validation failed");
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Singular-value distance analysis and distribution-shaped LoRA initialization"};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1);

  Common common;
  common.argv.assign(argv + 1, argv + argc);

  auto add_common = [&](CLI::App* sub, bool with_rank) {
    sub->add_option("--out", common.out, "Output directory")->capture_default_str();
    sub->add_option("--threads", common.threads, "Worker threads (0 = all cores)");
    if (with_rank) {
      sub->add_option("--rank", common.rank, "Singular values kept per projection")
          ->check(CLI::PositiveNumber)
          ->capture_default_str();
      sub->add_flag("--clamp-rank", common.clamp_rank, "Lower --rank to the largest rank the model allows");
      sub->add_option("--svd", common.svd, "Singular value method")
          ->check(CLI::IsMember({"auto", "dense", "subspace"}))
          ->capture_default_str();
      sub->add_option("--name-schema", common.schema_path, "JSON map of tensor-name templates to kinds")
          ->check(CLI::ExistingFile);
    }
  };

  std::string model_arg;
  auto* analyze = app.add_subcommand("analyze", "Singular-value distance pools, fits and histograms");
  analyze->add_option("model", model_arg, "Checkpoint file or directory (or a name under $WSHAPE_CACHE)")
      ->required();
  add_common(analyze, true);

  std::string preset = "default";
  std::string order_text;
  auto* characterize = app.add_subcommand("characterize", "Group projection kinds into referenced-weight groups");
  characterize->add_option("model", model_arg, "Checkpoint file or directory")->required();
  characterize->add_option("--preset", preset, "Reference order preset")
      ->check(CLI::IsMember(reference_order_presets()))
      ->capture_default_str();
  characterize->add_option("--order", order_text, "Comma-separated reference order, overrides --preset");
  add_common(characterize, true);

  std::string gen_path;
  std::string family;
  auto* generate = app.add_subcommand("generate", "Generate a template-sharing matrix pair and classify it");
  generate->add_option("config", gen_path, "Generator config JSON")->check(CLI::ExistingFile);
  generate->add_option("--family", family, "Count law family when no config is given")
      ->check(CLI::IsMember({"pareto", "gaussian", "constant"}));
  generate->add_option("--seed", common.seed, "Random seed")->capture_default_str();
  add_common(generate, false);

  std::string table_path;
  std::string target_path;
  std::string target_preset = "llama-3.2-1b";
  std::string mode_text;
  auto* reshape = app.add_subcommand("reshape", "Generate LoRA A/B initialization from a characteristic table");
  reshape->add_option("--table", table_path, "Characteristic table JSON")->required()->check(CLI::ExistingFile);
  reshape->add_option("--target", target_path, "Target spec JSON")->check(CLI::ExistingFile);
  reshape->add_option("--preset,--target-preset", target_preset, "Target model preset when --target is absent")
      ->check(CLI::IsMember(lora_target_presets()))
      ->capture_default_str();
  reshape->add_option("--gen-config", gen_path, "Generator config JSON")->check(CLI::ExistingFile);
  reshape->add_option("--mode", mode_text, "Initialization mode")->check(CLI::IsMember({"paper", "zero-b"}));
  int lora_rank = 0;
  reshape->add_option("--rank", lora_rank, "LoRA rank, overrides the target")->check(CLI::PositiveNumber);
  reshape->add_option("--seed", common.seed, "Random seed")->capture_default_str();
  reshape->add_option("--out", common.out, "Adapter output directory")->required();
  reshape->add_option("--threads", common.threads, "Worker threads (0 = all cores)");

  std::string adapter_dir;
  auto* validate = app.add_subcommand("validate", "Re-check an exported adapter against its table");
  validate->add_option("adapter", adapter_dir, "Adapter directory")->required()->check(CLI::ExistingDirectory);
  validate->add_option("--table", table_path, "Characteristic table JSON")->required()->check(CLI::ExistingFile);
  validate->add_option("--out", common.out, "Write validation_report.json and a run manifest here");

  auto* presets = app.add_subcommand("presets", "List reference-order and target presets");

  CLI11_PARSE(app, argc, argv);

  try {
    if (analyze->parsed()) return cmd_analyze(model_arg, common);
    if (characterize->parsed()) return cmd_characterize(model_arg, preset, order_text, common);
    if (generate->parsed()) return cmd_generate(gen_path, family, common);
    if (reshape->parsed()) return cmd_reshape(table_path, target_path, target_preset, gen_path, mode_text, lora_rank, common);
    if (validate->parsed()) return cmd_validate(adapter_dir, table_path, common);
    if (presets->parsed()) {
      std::cout << "reference orders:";
      for (const auto& name : reference_order_presets()) std::cout << " " << name;
      std::cout << "\ntargets:";
      for (const auto& name : lora_target_presets()) std::cout << " " << name;
      std::cout << "\n";
      return 0;
    }
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const ValidationFailed& e) {
    std::cerr << "validation failed: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return 0;
}
