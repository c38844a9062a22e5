#include "doctest.h"

#include "support/fixtures.hpp"
#include "wshape/stats.hpp"

#include <cmath>
#include <numeric>

using namespace wshape;
using namespace wshape::testing;

namespace {

// Log-likelihood of exceedances y >= 0 under GPD(shape, scale), written from
// the density directly.
double direct_gpd_loglik(const std::vector<double>& y, double shape, double scale) {
  double ll = 0.0;
  for (double v : y) {
    if (std::abs(shape) < 1e-12) {
      ll += -std::log(scale) - v / scale;
      continue;
    }
    const double t = 1.0 + shape * v / scale;
    if (t <= 0.0) return -INFINITY;
    ll += -std::log(scale) - (1.0 + 1.0 / shape) * std::log(t);
  }
  return ll;
}

std::vector<double> gpd_sample(double shape, double scale, double loc, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::vector<double> out(n);
  for (double& v : out) {
    const double u = uniform(rng);
    v = loc + scale * (std::pow(1.0 - u, -shape) - 1.0) / shape;
  }
  return out;
}

// Deterministic heavy-tailed data shared with the frozen reference fit below.
std::vector<double> golden_tail_data() {
  std::vector<double> x;
  for (int i = 1; i <= 200; ++i) {
    const double u = std::fmod(i * 0.6180339887498949, 1.0);
    x.push_back(0.1 + std::pow(u, -0.5) - 1.0);
  }
  return x;
}

} // namespace

TEST_CASE("Pareto fit reaches the likelihood maximum of a brute-force grid") {
  for (auto [shape, seed] : {std::pair{0.3, 1}, {0.9, 2}, {-0.2, 3}}) {
    const auto x = gpd_sample(shape, 2.0, 0.5, 400, static_cast<std::uint64_t>(seed));
    const double lo = *std::min_element(x.begin(), x.end());
    std::vector<double> y;
    for (double v : x) y.push_back(v - lo);

    double best = -INFINITY, best_shape = 0, best_scale = 0;
    for (double s = -0.95; s <= 2.0; s += 0.005) {
      for (double sc = 0.2; sc <= 6.0; sc *= 1.004) {
        const double ll = direct_gpd_loglik(y, s, sc);
        if (ll > best) {
          best = ll;
          best_shape = s;
          best_scale = sc;
        }
      }
    }
    const ParetoFit fit = fit_pareto(std::span<const double>(x));
    CHECK(fit.location == lo);
    CHECK(direct_gpd_loglik(y, fit.shape, fit.scale) >= best - 1e-9);
    CHECK(fit.log_likelihood == doctest::Approx(direct_gpd_loglik(y, fit.shape, fit.scale)).epsilon(1e-9));
    CHECK(fit.shape == doctest::Approx(best_shape).epsilon(0.02));
    CHECK(fit.scale == doctest::Approx(best_scale).epsilon(0.02));
  }
}

TEST_CASE("Pareto fit matches a frozen reference fit") {
  // Reference: scipy.stats.genpareto.fit(x, floc=min(x)) on golden_tail_data.
  const auto x = golden_tail_data();
  const ParetoFit fit = fit_pareto(std::span<const double>(x));
  CHECK(fit.location == doctest::Approx(0.10155643622186616));
  CHECK(fit.shape == doctest::Approx(0.4686220929466286).epsilon(1e-3));
  CHECK(fit.scale == doctest::Approx(0.5010490255741122).epsilon(1e-3));
  CHECK(fit.log_likelihood >= -155.50428902627934 - 1e-6);
  CHECK(fit.ks_statistic == doctest::Approx(0.009078681847659524).epsilon(1e-2));

  const NormalFit normal = fit_normal(std::span<const double>(x));
  CHECK(normal.mean == doctest::Approx(1.0026494023614763));
  CHECK(normal.stddev == doctest::Approx(1.525318687639727));
  CHECK(normal.ks_statistic == doctest::Approx(0.2773415648150999).epsilon(1e-9));
  CHECK(skewness(x) == doctest::Approx(4.399114814166177).epsilon(1e-9));
}

TEST_CASE("Pareto shape recovery on large samples") {
  for (double shape : {0.3, 0.8, 1.5}) {
    const auto x = gpd_sample(shape, 1.0, 0.0, 20000, static_cast<std::uint64_t>(shape * 100));
    CHECK(fit_pareto(std::span<const double>(x)).shape == doctest::Approx(shape).epsilon(0.1));
  }
}

TEST_CASE("GPD cdf and log-likelihood") {
  CHECK(gpd_cdf(0.0, 0.5, 0.0, 1.0) == 0.0);
  CHECK(gpd_cdf(2.0, 0.5, 0.0, 1.0) == doctest::Approx(1.0 - std::pow(2.0, -2.0)));
  CHECK(gpd_cdf(1.0, 0.0, 0.0, 2.0) == doctest::Approx(1.0 - std::exp(-0.5)));
  CHECK(gpd_cdf(5.0, -0.5, 0.0, 1.0) == 1.0);
  const std::vector<double> y{0.1, 0.5, 2.0};
  CHECK(gpd_log_likelihood(y, 0.4, 1.3) == doctest::Approx(direct_gpd_loglik(y, 0.4, 1.3)));
  CHECK(gpd_log_likelihood(y, 0.0, 1.3) == doctest::Approx(direct_gpd_loglik(y, 0.0, 1.3)));
}

TEST_CASE("Kolmogorov-Smirnov statistic") {
  auto uniform = [](double x) { return std::clamp(x, 0.0, 1.0); };
  const std::vector<double> one{0.5};
  CHECK(ks_statistic(std::span<const double>(one), uniform) == doctest::Approx(0.5));
  std::vector<double> mid;
  for (int i = 0; i < 20; ++i) mid.push_back((i + 0.5) / 20.0);
  CHECK(ks_statistic(std::span<const double>(mid), uniform) == doctest::Approx(0.025));
  const std::vector<double> shifted{0.9, 0.95, 0.99};
  CHECK(ks_statistic(std::span<const double>(shifted), uniform) == doctest::Approx(0.9));
  CHECK(ks_critical_value_5pct(100) == doctest::Approx(1.358 / (10.0 + 0.12 + 0.011)));
}

TEST_CASE("skewness and normal fit against direct moments") {
  const std::vector<double> v{1, 2, 3, 10};
  CHECK(skewness(v) == doctest::Approx(1.0182337649086284));
  const std::vector<double> flat{2, 2, 2};
  CHECK(skewness(flat) == 0.0);
  std::vector<double> repeated;
  for (int i = 0; i < 25; ++i) repeated.insert(repeated.end(), v.begin(), v.end());
  const NormalFit f = fit_normal(std::span<const double>(repeated));
  CHECK(f.mean == 4.0);
  CHECK(f.stddev == doctest::Approx(std::sqrt(1250.0 / 99.0)));
  const std::vector<double> flat100(100, 2.0);
  CHECK(error_of([&] { fit_normal(std::span<const double>(flat100)); }) == ErrorCode::DegenerateSamples);
}

TEST_CASE("classification rule") {
  std::mt19937_64 rng(4);
  std::exponential_distribution<double> exponential(1.0);
  std::normal_distribution<double> normal(5.0, 1.0);
  std::vector<double> heavy, bell;
  for (int i = 0; i < 3000; ++i) {
    heavy.push_back(exponential(rng));
    bell.push_back(normal(rng));
  }
  const auto h = classify_distribution(std::span<const double>(heavy));
  CHECK(h.kind == DistributionKind::PowerLaw);
  CHECK(h.score == doctest::Approx(std::min(h.diagnostics.normal_ks - h.diagnostics.pareto_ks,
                                            h.diagnostics.skewness - 1.0)));
  const auto b = classify_distribution(std::span<const double>(bell));
  CHECK(b.kind == DistributionKind::NonPowerLaw);
  CHECK(b.score <= 0.0);
  CHECK(b.diagnostics.sample_count == 3000);

  // Skewed but bounded: the Pareto fit wins on KS, the skewness guard does not.
  std::vector<double> mild;
  for (int i = 0; i < 3000; ++i) mild.push_back(std::sqrt(-std::log(1.0 - (i + 0.5) / 3000.0)));
  const auto m = classify_distribution(std::span<const double>(mild));
  CHECK(m.diagnostics.skewness < 1.0);
  CHECK(m.kind == DistributionKind::NonPowerLaw);
}

TEST_CASE("fit preconditions") {
  std::vector<double> few(kMinFitSamples - 1, 1.0);
  std::iota(few.begin(), few.end(), 1.0);
  CHECK(error_of([&] { fit_pareto(std::span<const double>(few)); }) == ErrorCode::TooFewSamples);
  CHECK(error_of([&] { classify_distribution(std::span<const double>(few)); }) == ErrorCode::TooFewSamples);
  std::vector<double> same(100, 0.3);
  CHECK(error_of([&] { fit_pareto(std::span<const double>(same)); }) == ErrorCode::DegenerateSamples);
  std::vector<double> nan(100, 1.0);
  nan[3] = std::nan("");
  CHECK(error_of([&] { fit_pareto(std::span<const double>(nan)); }) == ErrorCode::NonFinite);
}

TEST_CASE("DSV pools drop zeros before fitting") {
  DsvSamples pool;
  pool.values = golden_tail_data();
  pool.values.insert(pool.values.end(), 30, 0.0);
  const ParetoFit with_zeros = fit_pareto(pool);
  const auto clean = golden_tail_data();
  CHECK(with_zeros.shape == fit_pareto(std::span<const double>(clean)).shape);
  CHECK(with_zeros.sample_count == 200);
}

TEST_CASE("histograms") {
  std::vector<double> v;
  for (int i = 0; i < 10; ++i) v.push_back(i);
  const Histogram h = histogram(v, 5);
  CHECK(h.counts == std::vector<std::size_t>{2, 2, 2, 2, 2});
  CHECK(h.edges.front() == 0.0);
  CHECK(h.edges.back() == 9.0);
  double mass = 0.0;
  for (std::size_t i = 0; i < h.counts.size(); ++i) mass += h.density[i] * (h.edges[i + 1] - h.edges[i]);
  CHECK(mass == doctest::Approx(1.0));

  const Histogram ranged = histogram(v, 2, std::pair{0.0, 4.0});
  CHECK(ranged.counts == std::vector<std::size_t>{2, 3});

  const std::vector<double> constant{3.0, 3.0};
  const Histogram c = histogram(constant, 4);
  CHECK(c.edges.front() == 2.5);
  CHECK(c.edges.back() == 3.5);
  CHECK(std::accumulate(c.counts.begin(), c.counts.end(), std::size_t{0}) == 2);

  CHECK(error_of([&] { histogram(v, 1); }) == ErrorCode::InvalidConfig);
  CHECK(error_of([&] { histogram(std::vector<double>{}, 3); }) == ErrorCode::TooFewSamples);
}

TEST_CASE("polar histogram maps min-max onto a full turn") {
  const std::vector<double> v{1.0, 1.5, 2.0, 3.0, 3.0};
  const PolarHistogram p = polar_histogram(v, 4);
  CHECK(p.min_value == 1.0);
  CHECK(p.max_value == 3.0);
  CHECK(p.sector_start_degrees == std::vector<double>{0, 90, 180, 270});
  CHECK(p.counts == std::vector<std::size_t>{1, 1, 1, 2});
  CHECK(error_of([&] { polar_histogram(std::vector<double>{1, 1}, 8); }) == ErrorCode::DegenerateSamples);
  CHECK(error_of([&] { polar_histogram(v, 3); }) == ErrorCode::InvalidConfig);
}
