#include "wshape/stats.hpp"
#include "wshape/error.hpp"

#include <cmath>
#include <limits>
#include <numeric>

namespace wshape {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::vector<double> nonzero_values(const DsvSamples& samples) {
  if (samples.zeros_removed) return samples.values;
  std::vector<double> out;
  out.reserve(samples.values.size());
  for (double v : samples.values) {
    if (v != 0.0) out.push_back(v);
  }
  return out;
}

void require_samples(std::span<const double> values, std::size_t minimum) {
  if (values.size() < minimum) {
    throw Error(ErrorCode::TooFewSamples,
                std::to_string(values.size()) + " samples, need " + std::to_string(minimum));
  }
  for (double v : values) {
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFinite, "samples contain NaN/Inf");
  }
}

// Profile log-likelihood of the GPD at theta = shape / scale; the inner MLE
// for the shape given theta is mean(log1p(theta * y)).
struct Profile {
  double theta = 0.0;
  double shape = 0.0;
  double scale = 0.0;
  double log_likelihood = kNegInf;
};

Profile profile_at(std::span<const double> y, double y_mean, double theta) {
  const double n = static_cast<double>(y.size());
  Profile p;
  p.theta = theta;
  if (theta == 0.0) {
    p.shape = 0.0;
    p.scale = y_mean;
    p.log_likelihood = -n * std::log(y_mean) - n;
    return p;
  }
  double sum = 0.0;
  for (double v : y) {
    const double arg = theta * v;
    if (arg <= -1.0) return p;
    sum += std::log1p(arg);
  }
  p.shape = sum / n;
  if (p.shape < -1.0 || p.shape == 0.0) return p;
  p.scale = p.shape / theta;
  if (!(p.scale > 0.0) || !std::isfinite(p.scale)) return p;
  p.log_likelihood = -n * std::log(p.scale) - n * (1.0 + p.shape);
  return p;
}

bool improves(const Profile& candidate, const Profile& best) {
  if (!std::isfinite(candidate.log_likelihood)) return false;
  if (!std::isfinite(best.log_likelihood)) return true;
  const double slack = 1e-12 * std::max(1.0, std::abs(best.log_likelihood));
  if (candidate.log_likelihood > best.log_likelihood + slack) return true;
  // Ties go to the smaller shape.
  return std::abs(candidate.log_likelihood - best.log_likelihood) <= slack && candidate.shape < best.shape;
}

} // namespace

std::string_view distribution_kind_name(DistributionKind kind) {
  return kind == DistributionKind::PowerLaw ? "PowerLaw" : "NonPowerLaw";
}

double gpd_cdf(double x, double shape, double location, double scale) {
  const double z = (x - location) / scale;
  if (z <= 0.0) return 0.0;
  if (shape == 0.0) return -std::expm1(-z);
  const double base = 1.0 + shape * z;
  if (base <= 0.0) return 1.0; // beyond the upper endpoint when shape < 0
  return -std::expm1(-std::log(base) / shape);
}

double gpd_log_likelihood(std::span<const double> exceedances, double shape, double scale) {
  if (!(scale > 0.0)) return kNegInf;
  const double n = static_cast<double>(exceedances.size());
  double total = -n * std::log(scale);
  for (double y : exceedances) {
    if (y < 0.0) return kNegInf;
    if (shape == 0.0) {
      total -= y / scale;
    } else {
      const double base = shape * y / scale;
      if (base <= -1.0) return kNegInf;
      total -= (1.0 / shape + 1.0) * std::log1p(base);
    }
  }
  return total;
}

double ParetoFit::cdf(double x) const { return gpd_cdf(x, shape, location, scale); }

double NormalFit::cdf(double x) const {
  return 0.5 * std::erfc(-(x - mean) / (stddev * std::sqrt(2.0)));
}

ParetoFit fit_pareto(std::span<const double> values) {
  require_samples(values, kMinFitSamples);
  const double location = *std::min_element(values.begin(), values.end());
  std::vector<double> y(values.size());
  std::transform(values.begin(), values.end(), y.begin(), [&](double v) { return v - location; });
  const double y_max = *std::max_element(y.begin(), y.end());
  if (!(y_max > 0.0)) throw Error(ErrorCode::DegenerateSamples, "all samples are equal");
  const double y_mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());

  // Ascending grid in theta: the bounded side (-1/y_max, 0), zero, then the
  // heavy-tail side scaled by the mean exceedance.
  std::vector<double> grid;
  for (double k = 12.0; k > 0.3; k -= 0.05) grid.push_back(-(1.0 - std::pow(10.0, -k)) / y_max);
  for (double k = -0.3; k >= -8.0; k -= 0.05) grid.push_back(-std::pow(10.0, k) / y_max);
  grid.push_back(0.0);
  for (double k = -8.0; k <= 8.0; k += 0.05) grid.push_back(std::pow(10.0, k) / y_mean);

  std::size_t best_index = 0;
  Profile best;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const Profile p = profile_at(y, y_mean, grid[i]);
    if (improves(p, best)) {
      best = p;
      best_index = i;
    }
  }
  if (!std::isfinite(best.log_likelihood)) {
    throw Error(ErrorCode::DegenerateSamples, "likelihood is not finite anywhere on the grid");
  }

  // Golden-section refinement inside the neighbouring grid bracket.
  double lo = grid[best_index > 0 ? best_index - 1 : 0];
  double hi = grid[std::min(best_index + 1, grid.size() - 1)];
  constexpr double kInvPhi = 0.6180339887498949;
  double a = hi - kInvPhi * (hi - lo);
  double b = lo + kInvPhi * (hi - lo);
  Profile pa = profile_at(y, y_mean, a);
  Profile pb = profile_at(y, y_mean, b);
  for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(std::abs(lo), std::abs(hi)); ++it) {
    if (pa.log_likelihood >= pb.log_likelihood) {
      hi = b;
      b = a;
      pb = pa;
      a = hi - kInvPhi * (hi - lo);
      pa = profile_at(y, y_mean, a);
    } else {
      lo = a;
      a = b;
      pa = pb;
      b = lo + kInvPhi * (hi - lo);
      pb = profile_at(y, y_mean, b);
    }
  }
  for (const Profile& p : {pa, pb}) {
    if (improves(p, best)) best = p;
  }

  ParetoFit fit;
  fit.shape = best.shape;
  fit.scale = best.scale;
  fit.location = location;
  fit.log_likelihood = best.log_likelihood;
  fit.sample_count = values.size();
  fit.ks_statistic = ks_statistic(values, [&](double x) { return fit.cdf(x); });
  return fit;
}

ParetoFit fit_pareto(const DsvSamples& samples) {
  const auto values = nonzero_values(samples);
  return fit_pareto(std::span<const double>(values));
}

NormalFit fit_normal(std::span<const double> values) {
  require_samples(values, kMinFitSamples);
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  NormalFit fit;
  fit.mean = mean;
  fit.stddev = std::sqrt(ss / (n - 1.0));
  fit.sample_count = values.size();
  if (!(fit.stddev > 0.0)) throw Error(ErrorCode::DegenerateSamples, "zero variance");
  fit.ks_statistic = ks_statistic(values, [&](double x) { return fit.cdf(x); });
  return fit;
}

NormalFit fit_normal(const DsvSamples& samples) { return fit_normal(std::span<const double>(samples.values)); }

double skewness(std::span<const double> values) {
  if (values.empty()) return 0.0;
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double m2 = 0.0;
  double m3 = 0.0;
  for (double v : values) {
    const double d = v - mean;
    m2 += d * d;
    m3 += d * d * d;
  }
  m2 /= n;
  m3 /= n;
  if (m2 <= 0.0) return 0.0;
  return m3 / std::pow(m2, 1.5);
}

DistributionClass classify_distribution(std::span<const double> values) {
  const ParetoFit pareto = fit_pareto(values);
  const NormalFit normal = fit_normal(values);
  DistributionClass out;
  out.diagnostics.pareto_ks = pareto.ks_statistic;
  out.diagnostics.normal_ks = normal.ks_statistic;
  out.diagnostics.skewness = skewness(values);
  out.diagnostics.sample_count = values.size();
  out.score = std::min(out.diagnostics.normal_ks - out.diagnostics.pareto_ks,
                       out.diagnostics.skewness - kPowerLawSkewness);
  const bool power_law = out.diagnostics.pareto_ks < out.diagnostics.normal_ks &&
                         out.diagnostics.skewness > kPowerLawSkewness;
  out.kind = power_law ? DistributionKind::PowerLaw : DistributionKind::NonPowerLaw;
  return out;
}

DistributionClass classify_distribution(const DsvSamples& samples) {
  const auto values = nonzero_values(samples);
  return classify_distribution(std::span<const double>(values));
}

double ks_critical_value_5pct(std::size_t n) {
  const double root = std::sqrt(static_cast<double>(n));
  return 1.358 / (root + 0.12 + 0.11 / root);
}

Histogram histogram(std::span<const double> values, int bins, std::optional<std::pair<double, double>> range) {
  if (bins < 2) throw Error(ErrorCode::InvalidConfig, "histogram needs at least 2 bins");
  if (values.empty()) throw Error(ErrorCode::TooFewSamples, "histogram of an empty pool");
  double lo;
  double hi;
  if (range) {
    std::tie(lo, hi) = *range;
    if (!(hi > lo)) throw Error(ErrorCode::InvalidConfig, "histogram range must be increasing");
  } else {
    const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
    lo = *mn;
    hi = *mx;
    if (hi == lo) {
      lo -= 0.5;
      hi += 0.5;
    }
  }
  const double width = (hi - lo) / bins;
  Histogram h;
  h.edges.resize(static_cast<std::size_t>(bins) + 1);
  for (int i = 0; i <= bins; ++i) h.edges[static_cast<std::size_t>(i)] = lo + width * i;
  h.edges.back() = hi;
  h.counts.assign(static_cast<std::size_t>(bins), 0);
  std::size_t counted = 0;
  for (double v : values) {
    if (v < lo || v > hi) continue;
    auto index = static_cast<std::size_t>((v - lo) / width);
    h.counts[std::min(index, h.counts.size() - 1)]++;
    ++counted;
  }
  if (counted == 0) throw Error(ErrorCode::TooFewSamples, "no samples inside the histogram range");
  h.density.resize(h.counts.size());
  for (std::size_t i = 0; i < h.counts.size(); ++i) {
    h.density[i] = static_cast<double>(h.counts[i]) / (static_cast<double>(counted) * width);
  }
  return h;
}

Histogram histogram(const DsvSamples& samples, int bins, std::optional<std::pair<double, double>> range) {
  return histogram(std::span<const double>(samples.values), bins, range);
}

PolarHistogram polar_histogram(std::span<const double> values, int sectors) {
  if (sectors < 4) throw Error(ErrorCode::InvalidConfig, "polar histogram needs at least 4 sectors");
  if (values.empty()) throw Error(ErrorCode::TooFewSamples, "polar histogram of an empty pool");
  const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
  PolarHistogram p;
  p.min_value = *mn;
  p.max_value = *mx;
  if (!(p.max_value > p.min_value)) throw Error(ErrorCode::DegenerateSamples, "min equals max");
  const double sector_width = 360.0 / sectors;
  p.counts.assign(static_cast<std::size_t>(sectors), 0);
  p.sector_start_degrees.resize(static_cast<std::size_t>(sectors));
  for (int i = 0; i < sectors; ++i) p.sector_start_degrees[static_cast<std::size_t>(i)] = sector_width * i;
  for (double v : values) {
    const double angle = 360.0 * (v - p.min_value) / (p.max_value - p.min_value);
    const auto index = static_cast<std::size_t>(angle / sector_width);
    p.counts[std::min(index, p.counts.size() - 1)]++;
  }
  return p;
}

PolarHistogram polar_histogram(const DsvSamples& samples, int sectors) {
  return polar_histogram(std::span<const double>(samples.values), sectors);
}

} // namespace wshape
