#pragma once

#include "wshape/distance.hpp"
#include "wshape/stats.hpp"
#include "wshape/types.hpp"

#include "json.hpp"

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace wshape {

/// Law for the number of template positions a generated row perturbs. Draws
/// are rounded to the nearest integer and clamped to [0, n]. The Pareto law is
/// the Lomax form, P(X > x) = (1 + x / scale)^-shape, so small counts (0, 1)
/// keep real probability mass.
struct CountLaw {
  enum class Type { Constant, Gaussian, Pareto };

  Type type = Type::Pareto;
  double constant = 0.0;   // Constant
  double mu = 0.0;         // Gaussian
  double sigma = 1.0;      // Gaussian, > 0
  double shape = 1.78;     // Pareto, > 0
  double scale = 1.0;      // Pareto, > 0

  static CountLaw make_constant(double count);
  static CountLaw make_gaussian(double mu, double sigma);
  static CountLaw make_pareto(double shape, double scale);

  /// Pareto with shape 1.78 and median n / 20.
  static CountLaw default_pareto(int n);
  /// Gaussian centred on n / 2 with sigma n / 8.
  static CountLaw default_gaussian(int n);
  /// Constant n / 2.
  static CountLaw default_constant(int n);

  /// Same law for rows `factor` times as long (counts scale linearly).
  CountLaw rescaled(double factor) const;

  void validate() const;
};

std::string_view count_law_name(CountLaw::Type type);

enum class TemplateKernel {
  Independent,        // i.i.d. Gaussian entries
  SquaredExponential, // correlated over index distance, length_scale
};

struct GeneratorConfig {
  int n = 64; // row length
  int m = 64; // rows per matrix
  double template_mu = 0.0;
  double template_sigma = 1.0;
  double increment_mu = 0.0;
  double increment_sigma = 1.0;
  CountLaw count_law = CountLaw::default_pareto(64);
  std::uint64_t seed = 0;
  TemplateKernel kernel = TemplateKernel::Independent;
  double length_scale = 8.0;

  void validate() const;
};

/// Config with every field at its default and the given count law family
/// ("pareto", "gaussian", "constant") sized for n.
GeneratorConfig default_generator_config(const std::string& family, int n = 64, int m = 64,
                                         std::uint64_t seed = 0);

/// Row streams are keyed by (seed, matrix_id, row); the template by (seed,
/// "template").
std::mt19937_64 template_stream(std::uint64_t seed);
std::mt19937_64 row_stream(std::uint64_t seed, std::uint64_t matrix_id, std::uint64_t row);

Vector generate_template(const GeneratorConfig& cfg);

int draw_increment_count(const CountLaw& law, int n, std::mt19937_64& rng);

struct GeneratedRow {
  Vector values;
  std::vector<int> positions; // perturbed indices, in draw order
};

/// Draws p from the count law, p Gaussian increments, and p distinct uniform
/// positions; adds each increment to the template at its position.
GeneratedRow generate_row(const Vector& template_row, const GeneratorConfig& cfg, std::mt19937_64& rng);
GeneratedRow generate_row(const Vector& template_row, const CountLaw& law, double increment_mu,
                          double increment_sigma, std::mt19937_64& rng);

struct GeneratedMatrix {
  Matrix values;       // m x n
  Vector template_row; // length n
  std::vector<int> counts;
};

GeneratedMatrix generate_matrix(const GeneratorConfig& cfg, std::uint64_t matrix_id = 0);

/// All (row of a, row of b) distances, zeros removed.
DsvSamples cross_row_dsv(const Matrix& a, const Matrix& b);

/// Distances between all unordered pairs of rows, zeros removed.
DsvSamples within_row_dsv(const Matrix& a);

struct GeneratedPair {
  Matrix a;
  Matrix b;
  Vector template_row;
  DsvSamples pool;
  /// Empty when the pool cannot be classified (too small or constant);
  /// `failure` then says why.
  std::optional<DistributionClass> classification;
  std::string failure;
};

/// A and B share the template and use matrix ids 0 and 1.
GeneratedPair generate_pair_and_validate(const GeneratorConfig& cfg);

/// The class the generator is expected to produce for a count law: Pareto
/// counts give PowerLaw, everything else NonPowerLaw.
DistributionKind expected_class(const CountLaw& law);

nlohmann::json to_json(const CountLaw& law);
CountLaw count_law_from_json(const nlohmann::json& doc, int n);
nlohmann::json to_json(const GeneratorConfig& cfg);
/// Missing fields take defaults; `count_law` may be a family name string.
GeneratorConfig generator_config_from_json(const nlohmann::json& doc);

} // namespace wshape
