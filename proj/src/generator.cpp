#include "wshape/generator.hpp"
#include "wshape/error.hpp"
#include "wshape/random.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <numeric>

namespace wshape {

namespace {

constexpr double kDefaultParetoShape = 1.78;

void require(bool condition, const std::string& message) {
  if (!condition) throw Error(ErrorCode::InvalidConfig, message);
}

} // namespace

CountLaw CountLaw::make_constant(double count) {
  CountLaw law;
  law.type = Type::Constant;
  law.constant = count;
  return law;
}

CountLaw CountLaw::make_gaussian(double mu, double sigma) {
  CountLaw law;
  law.type = Type::Gaussian;
  law.mu = mu;
  law.sigma = sigma;
  return law;
}

CountLaw CountLaw::make_pareto(double shape, double scale) {
  CountLaw law;
  law.type = Type::Pareto;
  law.shape = shape;
  law.scale = scale;
  return law;
}

CountLaw CountLaw::default_pareto(int n) {
  const double median = n / 20.0;
  return make_pareto(kDefaultParetoShape, median / std::expm1(std::log(2.0) / kDefaultParetoShape));
}

CountLaw CountLaw::default_gaussian(int n) { return make_gaussian(n / 2.0, n / 8.0); }

CountLaw CountLaw::default_constant(int n) { return make_constant(std::round(n / 2.0)); }

CountLaw CountLaw::rescaled(double factor) const {
  CountLaw out = *this;
  out.constant *= factor;
  out.mu *= factor;
  out.sigma *= factor;
  out.scale *= factor;
  return out;
}

void CountLaw::validate() const {
  switch (type) {
  case Type::Constant: require(constant >= 0.0 && std::isfinite(constant), "constant count must be >= 0"); break;
  case Type::Gaussian: require(sigma > 0.0 && std::isfinite(mu), "gaussian count needs sigma > 0"); break;
  case Type::Pareto: require(shape > 0.0 && scale > 0.0, "pareto count needs shape > 0 and scale > 0"); break;
  }
}

std::string_view count_law_name(CountLaw::Type type) {
  switch (type) {
  case CountLaw::Type::Constant: return "constant";
  case CountLaw::Type::Gaussian: return "gaussian";
  case CountLaw::Type::Pareto: return "pareto";
  }
  return "?";
}

void GeneratorConfig::validate() const {
  require(n > 0 && m > 0, "n and m must be positive");
  require(template_sigma > 0.0 && increment_sigma > 0.0, "sigmas must be positive");
  require(std::isfinite(template_mu) && std::isfinite(increment_mu), "means must be finite");
  require(kernel == TemplateKernel::Independent || length_scale > 0.0, "length_scale must be positive");
  count_law.validate();
}

GeneratorConfig default_generator_config(const std::string& family, int n, int m, std::uint64_t seed) {
  GeneratorConfig cfg;
  cfg.n = n;
  cfg.m = m;
  cfg.seed = seed;
  if (family == "pareto") {
    cfg.count_law = CountLaw::default_pareto(n);
  } else if (family == "gaussian") {
    cfg.count_law = CountLaw::default_gaussian(n);
  } else if (family == "constant") {
    cfg.count_law = CountLaw::default_constant(n);
  } else {
    throw Error(ErrorCode::InvalidConfig, "unknown count law family " + family);
  }
  return cfg;
}

std::mt19937_64 template_stream(std::uint64_t seed) { return keyed_stream(seed, {label_key("template")}); }

std::mt19937_64 row_stream(std::uint64_t seed, std::uint64_t matrix_id, std::uint64_t row) {
  return keyed_stream(seed, {label_key("row"), matrix_id, row});
}

Vector generate_template(const GeneratorConfig& cfg) {
  cfg.validate();
  auto rng = template_stream(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector z(cfg.n);
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = normal(rng);

  if (cfg.kernel == TemplateKernel::Independent) {
    return (cfg.template_sigma * z).array() + cfg.template_mu;
  }
  Matrix kernel(cfg.n, cfg.n);
  for (int i = 0; i < cfg.n; ++i) {
    for (int j = 0; j < cfg.n; ++j) {
      const double d = (i - j) / cfg.length_scale;
      kernel(i, j) = std::exp(-0.5 * d * d);
    }
    kernel(i, i) += 1e-8;
  }
  Eigen::LLT<Matrix> llt(kernel);
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::InvalidConfig, "kernel is not positive definite");
  const Vector correlated = llt.matrixL() * z;
  return (cfg.template_sigma * correlated).array() + cfg.template_mu;
}

int draw_increment_count(const CountLaw& law, int n, std::mt19937_64& rng) {
  if (n <= 0) throw Error(ErrorCode::InvalidConfig, "row length must be positive");
  double draw = 0.0;
  switch (law.type) {
  case CountLaw::Type::Constant: draw = law.constant; break;
  case CountLaw::Type::Gaussian: draw = std::normal_distribution<double>(law.mu, law.sigma)(rng); break;
  case CountLaw::Type::Pareto: {
    const double u = 1.0 - std::uniform_real_distribution<double>(0.0, 1.0)(rng); // (0, 1]
    // Lomax inverse CDF.
    draw = law.scale * std::expm1(-std::log(u) / law.shape);
    break;
  }
  }
  const double rounded = std::round(draw);
  if (!(rounded > 0.0)) return 0;
  if (rounded >= n) return n;
  return static_cast<int>(rounded);
}

GeneratedRow generate_row(const Vector& template_row, const CountLaw& law, double increment_mu,
                          double increment_sigma, std::mt19937_64& rng) {
  const int n = static_cast<int>(template_row.size());
  const int p = draw_increment_count(law, n, rng);

  std::normal_distribution<double> increment(increment_mu, increment_sigma);
  std::vector<double> delta(static_cast<std::size_t>(p));
  for (double& d : delta) d = increment(rng);

  // Partial Fisher-Yates: the first p slots become p distinct positions.
  std::vector<int> index(static_cast<std::size_t>(n));
  std::iota(index.begin(), index.end(), 0);
  for (int i = 0; i < p; ++i) {
    const int j = std::uniform_int_distribution<int>(i, n - 1)(rng);
    std::swap(index[static_cast<std::size_t>(i)], index[static_cast<std::size_t>(j)]);
  }

  GeneratedRow row;
  row.values = template_row;
  row.positions.assign(index.begin(), index.begin() + p);
  for (int i = 0; i < p; ++i) row.values(row.positions[static_cast<std::size_t>(i)]) += delta[static_cast<std::size_t>(i)];
  return row;
}

GeneratedRow generate_row(const Vector& template_row, const GeneratorConfig& cfg, std::mt19937_64& rng) {
  if (template_row.size() != cfg.n) {
    throw Error(ErrorCode::LengthMismatch, "template length differs from cfg.n");
  }
  return generate_row(template_row, cfg.count_law, cfg.increment_mu, cfg.increment_sigma, rng);
}

GeneratedMatrix generate_matrix(const GeneratorConfig& cfg, std::uint64_t matrix_id) {
  cfg.validate();
  GeneratedMatrix out;
  out.template_row = generate_template(cfg);
  out.values.resize(cfg.m, cfg.n);
  out.counts.resize(static_cast<std::size_t>(cfg.m));
  for (int i = 0; i < cfg.m; ++i) {
    auto rng = row_stream(cfg.seed, matrix_id, static_cast<std::uint64_t>(i));
    auto row = generate_row(out.template_row, cfg, rng);
    out.values.row(i) = row.values.transpose();
    out.counts[static_cast<std::size_t>(i)] = static_cast<int>(row.positions.size());
  }
  return out;
}

DsvSamples cross_row_dsv(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw Error(ErrorCode::LengthMismatch, "row lengths differ");
  DsvSamples pool;
  pool.source = "rows(a)-rows(b)";
  pool.rank = static_cast<int>(a.cols());
  pool.values.reserve(static_cast<std::size_t>(a.rows() * b.rows()));
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const Vector x = a.row(i).transpose();
    for (Eigen::Index j = 0; j < b.rows(); ++j) {
      pool.values.push_back(cosine_distance(x, Vector(b.row(j).transpose())));
    }
  }
  return remove_zeros(std::move(pool));
}

DsvSamples within_row_dsv(const Matrix& a) {
  DsvSamples pool;
  pool.source = "rows(a)-rows(a)";
  pool.rank = static_cast<int>(a.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const Vector x = a.row(i).transpose();
    for (Eigen::Index j = i + 1; j < a.rows(); ++j) {
      pool.values.push_back(cosine_distance(x, Vector(a.row(j).transpose())));
    }
  }
  return remove_zeros(std::move(pool));
}

GeneratedPair generate_pair_and_validate(const GeneratorConfig& cfg) {
  GeneratedPair out;
  auto first = generate_matrix(cfg, 0);
  auto second = generate_matrix(cfg, 1);
  out.a = std::move(first.values);
  out.b = std::move(second.values);
  out.template_row = std::move(first.template_row);
  out.pool = cross_row_dsv(out.a, out.b);
  if (out.pool.values.empty()) {
    out.failure = Error(ErrorCode::DegenerateSamples, "every distance is zero").what();
    return out;
  }
  try {
    out.classification = classify_distribution(out.pool);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::TooFewSamples && e.code() != ErrorCode::DegenerateSamples) throw;
    out.failure = e.what();
  }
  return out;
}

DistributionKind expected_class(const CountLaw& law) {
  return law.type == CountLaw::Type::Pareto ? DistributionKind::PowerLaw : DistributionKind::NonPowerLaw;
}

nlohmann::json to_json(const CountLaw& law) {
  switch (law.type) {
  case CountLaw::Type::Constant: return {{"type", "constant"}, {"count", law.constant}};
  case CountLaw::Type::Gaussian: return {{"type", "gaussian"}, {"mu", law.mu}, {"sigma", law.sigma}};
  case CountLaw::Type::Pareto: return {{"type", "pareto"}, {"shape", law.shape}, {"scale", law.scale}};
  }
  return {};
}

CountLaw count_law_from_json(const nlohmann::json& doc, int n) {
  try {
    if (doc.is_string()) {
      const auto family = doc.get<std::string>();
      return default_generator_config(family, n).count_law;
    }
    const auto type = doc.at("type").get<std::string>();
    CountLaw law = default_generator_config(type, n).count_law;
    if (type == "constant") {
      law.constant = doc.value("count", law.constant);
    } else if (type == "gaussian") {
      law.mu = doc.value("mu", law.mu);
      law.sigma = doc.value("sigma", law.sigma);
    } else {
      law.shape = doc.value("shape", law.shape);
      // Keep the median at n / 20 when only the shape is overridden.
      law.scale = doc.contains("scale") ? doc.at("scale").get<double>()
                                        : (n / 20.0) / std::expm1(std::log(2.0) / law.shape);
    }
    law.validate();
    return law;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("count_law: ") + e.what());
  }
}

nlohmann::json to_json(const GeneratorConfig& cfg) {
  nlohmann::json doc = {{"n", cfg.n},
                        {"m", cfg.m},
                        {"template_mu", cfg.template_mu},
                        {"template_sigma", cfg.template_sigma},
                        {"increment_mu", cfg.increment_mu},
                        {"increment_sigma", cfg.increment_sigma},
                        {"count_law", to_json(cfg.count_law)},
                        {"seed", cfg.seed},
                        {"kernel", cfg.kernel == TemplateKernel::Independent ? "independent" : "squared_exponential"}};
  if (cfg.kernel == TemplateKernel::SquaredExponential) doc["length_scale"] = cfg.length_scale;
  return doc;
}

GeneratorConfig generator_config_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw Error(ErrorCode::InvalidConfig, "generator config must be an object");
  try {
    GeneratorConfig cfg;
    cfg.n = doc.value("n", cfg.n);
    cfg.m = doc.value("m", cfg.m);
    cfg.template_mu = doc.value("template_mu", cfg.template_mu);
    cfg.template_sigma = doc.value("template_sigma", cfg.template_sigma);
    cfg.increment_mu = doc.value("increment_mu", cfg.increment_mu);
    cfg.increment_sigma = doc.value("increment_sigma", cfg.increment_sigma);
    cfg.seed = doc.value("seed", cfg.seed);
    const auto kernel = doc.value("kernel", std::string("independent"));
    if (kernel == "independent") {
      cfg.kernel = TemplateKernel::Independent;
    } else if (kernel == "squared_exponential") {
      cfg.kernel = TemplateKernel::SquaredExponential;
    } else {
      throw Error(ErrorCode::InvalidConfig, "unknown kernel " + kernel);
    }
    cfg.length_scale = doc.value("length_scale", cfg.length_scale);
    if (cfg.n <= 0) throw Error(ErrorCode::InvalidConfig, "n must be positive");
    cfg.count_law = doc.contains("count_law") ? count_law_from_json(doc.at("count_law"), cfg.n)
                                              : CountLaw::default_pareto(cfg.n);
    cfg.validate();
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("generator config: ") + e.what());
  }
}

} // namespace wshape
