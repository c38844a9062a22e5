#pragma once

#include "wshape/checkpoint.hpp"
#include "wshape/types.hpp"

#include <vector>

namespace wshape {

/// Top-r singular values of one projection, non-increasing.
struct SvVector {
  int layer_index = 0;
  ProjectionKind kind = ProjectionKind::Q;
  Vector values;

  int rank() const { return static_cast<int>(values.size()); }
};

/// One SvVector per layer for a single projection kind, ordered by layer.
struct Msv {
  ProjectionKind kind = ProjectionKind::Q;
  int rank = 0;
  std::vector<SvVector> rows;

  int num_layers() const { return static_cast<int>(rows.size()); }
  /// L x r view, one layer per row.
  Matrix as_matrix() const;
  static Msv from_matrix(ProjectionKind kind, const Matrix& values);
};

enum class SvdMethod {
  Auto,     // dense for small matrices, subspace iteration otherwise
  Dense,    // divide-and-conquer bidiagonal SVD, values only
  Subspace, // block subspace iteration with Rayleigh-Ritz, dense fallback
};

struct SvdOptions {
  SvdMethod method = SvdMethod::Auto;
  /// Stop subspace iteration once the estimated relative error of every
  /// returned value is below this.
  double tolerance = 1e-12;
  int max_iterations = 300;
  /// Auto picks Dense when min(rows, cols) is at most this.
  Eigen::Index dense_cutoff = 768;
  /// Worker threads for per-layer decompositions (0 = hardware concurrency).
  unsigned threads = 0;
};

inline constexpr int kDefaultRank = 16;

Vector top_r_singular_values(const Matrix& x, int r, const SvdOptions& options = {});
SvVector top_r_singular_values(const ProjectionMatrix& x, int r, const SvdOptions& options = {});

Msv build_msv(const ModelWeights& model, ProjectionKind kind, int r, const SvdOptions& options = {});

/// Seven Msv objects in canonical kind order.
std::vector<Msv> build_all_msvs(const ModelWeights& model, int r, const SvdOptions& options = {});

/// Largest usable rank: min over kinds of min(rows, cols).
int max_rank(const ModelWeights& model);

} // namespace wshape
