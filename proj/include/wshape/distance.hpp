#pragma once

#include "wshape/spectral.hpp"
#include "wshape/types.hpp"

#include <span>
#include <string>
#include <vector>

namespace wshape {

/// A pool of cosine distances between SV vectors.
struct DsvSamples {
  std::vector<double> values;
  std::string source; // "q-k", "v-v", "all-pairs", ...
  int rank = 0;
  bool zeros_removed = false;

  std::size_t size() const { return values.size(); }
};

/// 1 - x.y / (|x||y|), clamped to [0, 2]. Bitwise symmetric in its arguments
/// and exactly zero for x == y.
double cosine_distance(std::span<const double> x, std::span<const double> y);
double cosine_distance(const Vector& x, const Vector& y);

/// Same kind: strict upper triangle, L(L-1)/2 values. Different kinds: every
/// (row of a, row of b) pair, row-major over a.
DsvSamples pairwise_dsv(const Msv& a, const Msv& b);

/// Every unordered pair of the SV vectors across all MSVs, self-pairs excluded,
/// zeros removed. Built as the concatenation of pairwise_dsv(a, b) for a <= b
/// in the given order.
DsvSamples all_pairs_dsv(std::span<const Msv> msvs);

DsvSamples remove_zeros(DsvSamples samples);

/// Cosine similarity between every pair of SV vectors, stacked kind-major then
/// layer (the heatmap layout).
Matrix similarity_matrix(std::span<const Msv> msvs);

} // namespace wshape
