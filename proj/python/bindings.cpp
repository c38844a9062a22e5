#include "wshape/characterizer.hpp"
#include "wshape/checkpoint.hpp"
#include "wshape/distance.hpp"
#include "wshape/error.hpp"
#include "wshape/generator.hpp"
#include "wshape/lora.hpp"
#include "wshape/report.hpp"
#include "wshape/spectral.hpp"
#include "wshape/stats.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace wshape;

namespace {

using FloatMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// JSON crosses the boundary as plain Python objects via the json module.
py::object to_py(const nlohmann::json& doc) { return py::module_::import("json").attr("loads")(doc.dump()); }

nlohmann::json from_py(const py::object& obj) {
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(obj).cast<std::string>());
}

SvdMethod parse_method(const std::string& name) {
  if (name == "auto") return SvdMethod::Auto;
  if (name == "dense") return SvdMethod::Dense;
  if (name == "subspace") return SvdMethod::Subspace;
  throw Error(ErrorCode::InvalidConfig, "unknown SVD method '" + name + "'");
}

ReferenceOrder order_from(const std::string& preset) {
  auto order = reference_order_preset(preset);
  if (!order) throw Error(ErrorCode::InvalidConfig, "unknown reference order preset '" + preset + "'");
  return *order;
}

LoraTargetSpec target_from(const py::object& target) {
  if (py::isinstance<py::str>(target)) {
    const auto name = target.cast<std::string>();
    auto spec = lora_target_preset(name);
    if (!spec) throw Error(ErrorCode::InvalidConfig, "unknown target preset '" + name + "'");
    return *spec;
  }
  return lora_target_from_json(from_py(target));
}

GeneratorConfig generator_from(const py::object& generator) {
  if (generator.is_none()) return default_generator_config("pareto");
  if (py::isinstance<py::str>(generator)) return default_generator_config(generator.cast<std::string>());
  return generator_config_from_json(from_py(generator));
}

LoraInitBundle reshape_from(const py::object& table, const py::object& target, std::uint64_t seed,
                            const py::object& generator, const std::string& mode, int rank, unsigned threads) {
  const CharacteristicTable t = characteristic_table_from_json(from_py(table));
  LoraTargetSpec spec = target_from(target);
  if (!mode.empty()) {
    auto parsed = parse_lora_mode(mode);
    if (!parsed) throw Error(ErrorCode::InvalidConfig, "unknown mode '" + mode + "'");
    spec.mode = *parsed;
  }
  if (rank > 0) spec.rank = rank;
  const GeneratorConfig gen = generator_from(generator);
  py::gil_scoped_release release;
  return reshape_lora_init(spec, t, gen, seed, {{}, threads});
}

std::vector<Msv> msvs_from(const py::dict& msv) {
  std::vector<Msv> out;
  for (ProjectionKind kind : kAllKinds) {
    const std::string name(kind_name(kind));
    if (!msv.contains(name)) throw Error(ErrorCode::MissingProjection, "no MSV for " + name);
    out.push_back(Msv::from_matrix(kind, msv[name.c_str()].cast<Matrix>()));
  }
  return out;
}

} // namespace

PYBIND11_MODULE(_wshape, m) {
  m.doc() = "Singular-value distance analysis and distribution-shaped LoRA initialization";
  m.attr("__version__") = kToolVersion;
  py::register_exception<Error>(m, "WShapeError", PyExc_RuntimeError);

  m.def(
      "top_r_singular_values",
      [](const Matrix& x, int r, const std::string& method) {
        SvdOptions opts;
        opts.method = parse_method(method);
        py::gil_scoped_release release;
        return top_r_singular_values(x, r, opts);
      },
      py::arg("x"), py::arg("r"), py::arg("method") = "auto");

  m.def(
      "cosine_distance", [](const Vector& x, const Vector& y) { return cosine_distance(x, y); }, py::arg("x"),
      py::arg("y"));

  m.def(
      "fit_pareto", [](const std::vector<double>& v) { return to_py(to_json(fit_pareto(v))); }, py::arg("values"));
  m.def(
      "classify", [](const std::vector<double>& v) { return to_py(to_json(classify_distribution(v))); },
      py::arg("values"));

  m.def(
      "analyze",
      [](const std::filesystem::path& path, int rank, unsigned threads) {
        const ModelWeights model = load_model_weights(path);
        SvdOptions opts;
        opts.threads = threads;
        std::vector<Msv> msvs;
        {
          py::gil_scoped_release release;
          msvs = build_all_msvs(model, rank, opts);
        }
        py::dict msv;
        for (const auto& x : msvs) msv[std::string(kind_name(x.kind)).c_str()] = x.as_matrix();
        py::dict out;
        out["model_id"] = model.model_id();
        out["num_layers"] = model.num_layers();
        out["rank"] = rank;
        out["msv"] = msv;
        return out;
      },
      py::arg("path"), py::arg("rank") = 16, py::arg("threads") = 0,
      "Per-kind L x r matrices of top singular values of a safetensors checkpoint.");

  m.def(
      "characterize",
      [](const py::dict& msv, const std::string& order, const std::string& model_id, unsigned threads) {
        const auto msvs = msvs_from(msv);
        const ReferenceOrder ref = order_from(order);
        CharacteristicTable table;
        {
          py::gil_scoped_release release;
          table = characterize_model(msvs, ref, model_id, threads);
        }
        return to_py(to_json(table));
      },
      py::arg("msv"), py::arg("order") = "default", py::arg("model_id") = "", py::arg("threads") = 0);

  m.def(
      "generate",
      [](const py::object& config, py::object seed) {
        GeneratorConfig cfg = generator_from(config);
        if (!seed.is_none()) cfg.seed = seed.cast<std::uint64_t>();
        const GeneratedPair pair = generate_pair_and_validate(cfg);
        py::dict out;
        out["a"] = pair.a;
        out["b"] = pair.b;
        out["template"] = pair.template_row;
        out["expected"] = std::string(distribution_kind_name(expected_class(cfg.count_law)));
        out["classification"] = pair.classification ? to_py(to_json(*pair.classification)) : py::none();
        out["failure"] = pair.failure;
        return out;
      },
      py::arg("config") = py::none(), py::arg("seed") = py::none(),
      "Two matrices sharing a template; config is a family name or a generator JSON object.");

  m.def(
      "reshape",
      [](const py::object& table, const py::object& target, std::uint64_t seed, const py::object& generator,
         const std::string& mode, int rank, unsigned threads) {
        const LoraInitBundle bundle = reshape_from(table, target, seed, generator, mode, rank, threads);
        py::dict out;
        for (const auto& [name, values] : bundle.tensors) out[name.c_str()] = FloatMatrix(values.cast<float>());
        return out;
      },
      py::arg("table"), py::arg("target"), py::arg("seed") = 0, py::arg("generator") = py::none(),
      py::arg("mode") = "", py::arg("rank") = 0, py::arg("threads") = 0,
      "PEFT-named float32 lora_A/lora_B tensors shaped by the table's groups.");

  m.def(
      "export_adapter",
      [](const py::object& table, const py::object& target, const std::filesystem::path& out_dir,
         std::uint64_t seed, const py::object& generator, const std::string& mode, int rank, unsigned threads) {
        const LoraInitBundle bundle = reshape_from(table, target, seed, generator, mode, rank, threads);
        export_adapter(bundle, out_dir);
        return to_py(adapter_manifest(bundle));
      },
      py::arg("table"), py::arg("target"), py::arg("out_dir"), py::arg("seed") = 0,
      py::arg("generator") = py::none(), py::arg("mode") = "", py::arg("rank") = 0, py::arg("threads") = 0,
      "Writes the adapter directory and returns its manifest.");

  m.def(
      "validate_adapter",
      [](const std::filesystem::path& dir, const py::object& table) {
        const CharacteristicTable t = characteristic_table_from_json(from_py(table));
        return to_py(to_json(validate_adapter(dir, t)));
      },
      py::arg("dir"), py::arg("table"));

  m.def("target_presets", &lora_target_presets);
  m.def("reference_order_presets", &reference_order_presets);
  m.def(
      "target_preset", [](const std::string& name) { return to_py(to_json(target_from(py::str(name)))); },
      py::arg("name"));
}
