#include "wshape/distance.hpp"
#include "wshape/error.hpp"

#include <algorithm>
#include <cmath>

namespace wshape {

double cosine_distance(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw Error(ErrorCode::LengthMismatch,
                std::to_string(x.size()) + " vs " + std::to_string(y.size()));
  }
  if (x.empty()) throw Error(ErrorCode::LengthMismatch, "vectors must be non-empty");
  double dot = 0.0;
  double xx = 0.0;
  double yy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    dot += x[i] * y[i];
    xx += x[i] * x[i];
    yy += y[i] * y[i];
  }
  if (xx == 0.0 || yy == 0.0) throw Error(ErrorCode::ZeroNorm, "cosine distance of a zero vector");
  // sqrt(xx * xx) == xx exactly, which makes d(x, x) == 0 exactly.
  const double similarity = std::clamp(dot / std::sqrt(xx * yy), -1.0, 1.0);
  return 1.0 - similarity;
}

double cosine_distance(const Vector& x, const Vector& y) {
  return cosine_distance(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())),
                         std::span<const double>(y.data(), static_cast<std::size_t>(y.size())));
}

DsvSamples pairwise_dsv(const Msv& a, const Msv& b) {
  if (a.rank != b.rank) {
    throw Error(ErrorCode::RankMismatch, std::to_string(a.rank) + " vs " + std::to_string(b.rank));
  }
  DsvSamples out;
  out.rank = a.rank;
  out.source = std::string(kind_name(a.kind)) + "-" + std::string(kind_name(b.kind));
  if (a.kind == b.kind) {
    const std::size_t n = a.rows.size();
    out.values.reserve(n * (n - (n > 0 ? 1 : 0)) / 2);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        out.values.push_back(cosine_distance(a.rows[i].values, a.rows[j].values));
      }
    }
  } else {
    out.values.reserve(a.rows.size() * b.rows.size());
    for (const auto& row_a : a.rows) {
      for (const auto& row_b : b.rows) out.values.push_back(cosine_distance(row_a.values, row_b.values));
    }
  }
  return out;
}

DsvSamples all_pairs_dsv(std::span<const Msv> msvs) {
  DsvSamples out;
  out.source = "all-pairs";
  if (msvs.empty()) return out;
  out.rank = msvs.front().rank;
  for (std::size_t i = 0; i < msvs.size(); ++i) {
    for (std::size_t j = i; j < msvs.size(); ++j) {
      const auto pool = pairwise_dsv(msvs[i], msvs[j]);
      out.values.insert(out.values.end(), pool.values.begin(), pool.values.end());
    }
  }
  return remove_zeros(std::move(out));
}

DsvSamples remove_zeros(DsvSamples samples) {
  std::erase(samples.values, 0.0);
  samples.zeros_removed = true;
  return samples;
}

Matrix similarity_matrix(std::span<const Msv> msvs) {
  std::vector<const Vector*> rows;
  for (const auto& msv : msvs) {
    for (const auto& row : msv.rows) rows.push_back(&row.values);
  }
  const auto n = static_cast<Eigen::Index>(rows.size());
  Matrix out(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    out(i, i) = 1.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      out(i, j) = out(j, i) = 1.0 - cosine_distance(*rows[static_cast<std::size_t>(i)],
                                                    *rows[static_cast<std::size_t>(j)]);
    }
  }
  return out;
}

} // namespace wshape
