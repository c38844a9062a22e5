#include "wshape/spectral.hpp"
#include "wshape/error.hpp"
#include "wshape/parallel.hpp"
#include "wshape/random.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

namespace wshape {

namespace {

void check_request(const Matrix& x, int r) {
  if (r < 1) throw Error(ErrorCode::RankTooLarge, "rank must be at least 1");
  const Eigen::Index min_dim = std::min(x.rows(), x.cols());
  if (r > min_dim) {
    throw Error(ErrorCode::RankTooLarge, "rank " + std::to_string(r) + " exceeds min dimension " +
                                             std::to_string(min_dim));
  }
  if (!x.allFinite()) throw Error(ErrorCode::NonFinite, "matrix contains NaN/Inf");
}

Vector dense_values(const Matrix& x, int r) {
  Eigen::BDCSVD<Matrix> svd(x);
  return svd.singularValues().head(r);
}

Matrix orthonormal_columns(const Matrix& y) {
  Eigen::HouseholderQR<Matrix> qr(y);
  return qr.householderQ() * Matrix::Identity(y.rows(), y.cols());
}

// Block subspace iteration on x x^T. After each sweep the singular values of
// x W (W orthonormal) are Ritz lower bounds that rise monotonically toward the
// true values; the observed contraction rate gives an error estimate.
std::optional<Vector> subspace_values(const Matrix& x, int r, const SvdOptions& options) {
  const Eigen::Index min_dim = std::min(x.rows(), x.cols());
  const Eigen::Index block = std::min<Eigen::Index>(min_dim, 2 * r + 16);

  auto rng = keyed_stream(0x5d5eedull, {static_cast<std::uint64_t>(x.rows()),
                                        static_cast<std::uint64_t>(x.cols()),
                                        static_cast<std::uint64_t>(r)});
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix omega(x.cols(), block);
  for (Eigen::Index i = 0; i < omega.size(); ++i) omega.data()[i] = normal(rng);

  Matrix q = orthonormal_columns(x * omega);
  Vector previous = Vector::Zero(r);
  double previous_change = std::numeric_limits<double>::infinity();

  for (int iteration = 0; iteration < options.max_iterations; ++iteration) {
    const Matrix w = orthonormal_columns(x.transpose() * q);
    const Matrix y = x * w;
    Eigen::HouseholderQR<Matrix> qr(y);
    const Matrix upper = qr.matrixQR().topRows(block).triangularView<Eigen::Upper>();
    const Vector ritz = Eigen::JacobiSVD<Matrix>(upper).singularValues().head(r);
    q = qr.householderQ() * Matrix::Identity(y.rows(), block);

    const double floor = std::max(ritz(0) * 1e-10, std::numeric_limits<double>::min());
    double change = 0.0;
    for (int i = 0; i < r; ++i) {
      change = std::max(change, std::abs(ritz(i) - previous(i)) / std::max(ritz(i), floor));
    }
    previous = ritz;
    if (change == 0.0) return ritz;
    if (iteration > 0) {
      const double rate = change / previous_change;
      if (rate < 1.0 && change * rate / (1.0 - rate) < options.tolerance &&
          change < options.tolerance) {
        return ritz;
      }
    }
    previous_change = change;
  }
  return std::nullopt;
}

} // namespace

Matrix Msv::as_matrix() const {
  Matrix out(num_layers(), rank);
  for (int i = 0; i < num_layers(); ++i) out.row(i) = rows[static_cast<std::size_t>(i)].values.transpose();
  return out;
}

Msv Msv::from_matrix(ProjectionKind kind, const Matrix& values) {
  Msv msv;
  msv.kind = kind;
  msv.rank = static_cast<int>(values.cols());
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    msv.rows.push_back({static_cast<int>(i), kind, values.row(i).transpose()});
  }
  return msv;
}

Vector top_r_singular_values(const Matrix& x, int r, const SvdOptions& options) {
  check_request(x, r);
  if (x.isZero(0.0)) return Vector::Zero(r);

  const Eigen::Index min_dim = std::min(x.rows(), x.cols());
  SvdMethod method = options.method;
  if (method == SvdMethod::Auto) {
    method = (min_dim <= options.dense_cutoff || 4 * r > min_dim) ? SvdMethod::Dense : SvdMethod::Subspace;
  }
  Vector values;
  if (method == SvdMethod::Subspace && 2 * r + 16 < min_dim) {
    if (auto iterated = subspace_values(x, r, options)) values = std::move(*iterated);
  }
  if (values.size() == 0) values = dense_values(x, r);

  // Enforce the ordering contract against last-ulp noise from the Ritz step.
  for (Eigen::Index i = 1; i < values.size(); ++i) values(i) = std::min(values(i), values(i - 1));
  return values.cwiseMax(0.0);
}

SvVector top_r_singular_values(const ProjectionMatrix& x, int r, const SvdOptions& options) {
  return {x.layer_index, x.kind, top_r_singular_values(x.values, r, options)};
}

int max_rank(const ModelWeights& model) {
  Eigen::Index best = std::numeric_limits<Eigen::Index>::max();
  for (ProjectionKind kind : kAllKinds) {
    const auto shape = model.shape(kind);
    best = std::min({best, shape.rows, shape.cols});
  }
  return static_cast<int>(best);
}

Msv build_msv(const ModelWeights& model, ProjectionKind kind, int r, const SvdOptions& options) {
  const auto shape = model.shape(kind);
  if (r < 1 || r > std::min(shape.rows, shape.cols)) {
    throw Error(ErrorCode::RankTooLarge, "rank " + std::to_string(r) + " invalid for " +
                                             std::string(kind_name(kind)) + " (" +
                                             std::to_string(shape.rows) + "x" + std::to_string(shape.cols) + ")");
  }
  Msv msv;
  msv.kind = kind;
  msv.rank = r;
  msv.rows.resize(static_cast<std::size_t>(model.num_layers()));
  parallel_for(
      msv.rows.size(),
      [&](std::size_t layer) {
        const auto values = model.matrix(static_cast<int>(layer), kind);
        msv.rows[layer] = {static_cast<int>(layer), kind, top_r_singular_values(*values, r, options)};
      },
      options.threads);
  return msv;
}

std::vector<Msv> build_all_msvs(const ModelWeights& model, int r, const SvdOptions& options) {
  for (ProjectionKind kind : kAllKinds) {
    const auto shape = model.shape(kind);
    if (r < 1 || r > std::min(shape.rows, shape.cols)) {
      throw Error(ErrorCode::RankTooLarge, "rank " + std::to_string(r) + " invalid for " +
                                               std::string(kind_name(kind)));
    }
  }
  const auto layers = static_cast<std::size_t>(model.num_layers());
  std::vector<Msv> msvs(kNumKinds);
  for (ProjectionKind kind : kAllKinds) {
    auto& msv = msvs[kind_index(kind)];
    msv.kind = kind;
    msv.rank = r;
    msv.rows.resize(layers);
  }
  parallel_for(
      layers * kNumKinds,
      [&](std::size_t task) {
        const int layer = static_cast<int>(task / kNumKinds);
        const ProjectionKind kind = kAllKinds[task % kNumKinds];
        const auto values = model.matrix(layer, kind);
        msvs[kind_index(kind)].rows[static_cast<std::size_t>(layer)] = {
            layer, kind, top_r_singular_values(*values, r, options)};
      },
      options.threads);
  return msvs;
}

} // namespace wshape
