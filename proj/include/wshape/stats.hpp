#pragma once

#include "wshape/distance.hpp"

#include <algorithm>
#include <cstddef>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace wshape {

/// Pools smaller than this are not fitted.
inline constexpr std::size_t kMinFitSamples = 50;

/// Skewness a pool must exceed to count as power-law.
inline constexpr double kPowerLawSkewness = 1.0;

/// Generalized Pareto fit with the location pinned at the sample minimum.
/// `shape` is the tail index reported as "alpha".
struct ParetoFit {
  double shape = 0.0;
  double location = 0.0;
  double scale = 1.0;
  double ks_statistic = 1.0;
  double log_likelihood = 0.0;
  std::size_t sample_count = 0;

  double cdf(double x) const;
};

struct NormalFit {
  double mean = 0.0;
  double stddev = 0.0;
  double ks_statistic = 1.0;
  std::size_t sample_count = 0;

  double cdf(double x) const;
};

enum class DistributionKind { PowerLaw, NonPowerLaw };

std::string_view distribution_kind_name(DistributionKind kind);

struct Diagnostics {
  double pareto_ks = 0.0;
  double normal_ks = 0.0;
  double skewness = 0.0;
  std::size_t sample_count = 0;
};

/// `score` is min(normal_ks - pareto_ks, skewness - 1); the class is PowerLaw
/// exactly when the score is positive.
struct DistributionClass {
  DistributionKind kind = DistributionKind::NonPowerLaw;
  double score = 0.0;
  Diagnostics diagnostics;
};

/// Generalized-Pareto log-density with location already subtracted.
double gpd_log_likelihood(std::span<const double> exceedances, double shape, double scale);
double gpd_cdf(double x, double shape, double location, double scale);

/// Maximum likelihood via the one-dimensional profile in theta = shape/scale,
/// restricted to shape >= -1 where the likelihood is bounded. Exact zeros are
/// dropped first when `samples.zeros_removed` is false.
ParetoFit fit_pareto(const DsvSamples& samples);
ParetoFit fit_pareto(std::span<const double> values);

NormalFit fit_normal(const DsvSamples& samples);
NormalFit fit_normal(std::span<const double> values);

DistributionClass classify_distribution(const DsvSamples& samples);
DistributionClass classify_distribution(std::span<const double> values);

/// Biased sample skewness m3 / m2^1.5 (0 for constant data).
double skewness(std::span<const double> values);

/// One-sample Kolmogorov-Smirnov distance of `values` against `cdf`.
template <typename Cdf>
double ks_statistic(std::span<const double> values, Cdf&& cdf);

/// Asymptotic 5% critical value with the small-sample correction
/// 1.358 / (sqrt(n) + 0.12 + 0.11 / sqrt(n)).
double ks_critical_value_5pct(std::size_t n);

struct Histogram {
  std::vector<double> edges;   // bins + 1
  std::vector<std::size_t> counts;
  std::vector<double> density; // counts / (n * width)
};

/// Equal-width bins over [min, max] (or `range` when given, dropping samples
/// outside it). A zero-width range is widened to +-0.5 around the value.
Histogram histogram(std::span<const double> values, int bins,
                    std::optional<std::pair<double, double>> range = std::nullopt);
Histogram histogram(const DsvSamples& samples, int bins,
                    std::optional<std::pair<double, double>> range = std::nullopt);

struct PolarHistogram {
  double min_value = 0.0;
  double max_value = 0.0;
  std::vector<double> sector_start_degrees;
  std::vector<std::size_t> counts;
};

/// Min-max maps distances onto [0, 360] degrees; the maximum lands in the last
/// sector.
PolarHistogram polar_histogram(std::span<const double> values, int sectors);
PolarHistogram polar_histogram(const DsvSamples& samples, int sectors);

// ---------------------------------------------------------------------------

template <typename Cdf>
double ks_statistic(std::span<const double> values, Cdf&& cdf) {
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const double f = cdf(sorted[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return std::min(d, 1.0);
}

} // namespace wshape
