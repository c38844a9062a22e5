#pragma once

#include "wshape/characterizer.hpp"
#include "wshape/checkpoint.hpp"
#include "wshape/error.hpp"
#include "wshape/generator.hpp"
#include "wshape/spectral.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <algorithm>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace wshape::testing {

inline Matrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

inline Matrix orthonormal_columns(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian_matrix(rows, cols, seed));
  return qr.householderQ() * Eigen::MatrixXd::Identity(rows, cols);
}

/// U diag(values) V^T with random orthonormal U, V.
inline Matrix with_singular_values(Eigen::Index rows, Eigen::Index cols, const Vector& values, std::uint64_t seed) {
  const Eigen::Index k = values.size();
  const Matrix u = orthonormal_columns(rows, k, seed);
  const Matrix v = orthonormal_columns(cols, k, seed + 1);
  return u * values.asDiagonal() * v.transpose();
}

/// Square roots of the eigenvalues of the smaller Gram matrix, descending.
inline Vector gram_singular_values(const Matrix& x, int r) {
  const Eigen::MatrixXd gram = x.rows() <= x.cols() ? Eigen::MatrixXd(x * x.transpose())
                                                     : Eigen::MatrixXd(x.transpose() * x);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
  Vector ev = eig.eigenvalues().reverse();
  Vector out(r);
  for (int i = 0; i < r; ++i) out(i) = std::sqrt(std::max(ev(i), 0.0));
  return out;
}

/// Seven MSVs where the kinds of each group share a Gaussian template and
/// every layer row perturbs it with the default Pareto count law.
inline std::vector<Msv> grouped_msvs(const std::vector<CharacteristicGroup>& groups, int layers, int rank,
                                     std::uint64_t seed, double increment_sigma = 0.5) {
  std::vector<Msv> msvs(kNumKinds);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    GeneratorConfig cfg = default_generator_config("pareto", rank, layers, seed * 131 + g);
    cfg.increment_sigma = increment_sigma;
    const Vector tmpl = generate_template(cfg);
    std::vector<ProjectionKind> kinds{groups[g].reference};
    kinds.insert(kinds.end(), groups[g].members.begin(), groups[g].members.end());
    for (ProjectionKind k : kinds) {
      Matrix rows(layers, rank);
      for (int i = 0; i < layers; ++i) {
        auto rng = row_stream(cfg.seed, kind_index(k), static_cast<std::uint64_t>(i));
        rows.row(i) = generate_row(tmpl, cfg, rng).values.transpose();
      }
      msvs[kind_index(k)] = Msv::from_matrix(k, rows);
    }
  }
  return msvs;
}

/// MSVs with unrelated i.i.d. rows for every kind.
inline std::vector<Msv> random_msvs(int layers, int rank, std::uint64_t seed) {
  std::vector<Msv> msvs;
  for (ProjectionKind k : kAllKinds) {
    msvs.push_back(Msv::from_matrix(k, gaussian_matrix(layers, rank, seed * 7 + kind_index(k)).cwiseAbs()));
  }
  return msvs;
}

struct TinyDims {
  int hidden = 24;
  int kv = 12;
  int intermediate = 40;
};

inline MatrixShape tiny_shape(ProjectionKind kind, const TinyDims& d) {
  switch (kind) {
  case ProjectionKind::Q:
  case ProjectionKind::O: return {d.hidden, d.hidden};
  case ProjectionKind::K:
  case ProjectionKind::V: return {d.kv, d.hidden};
  case ProjectionKind::Gate:
  case ProjectionKind::Up: return {d.intermediate, d.hidden};
  case ProjectionKind::Down: return {d.hidden, d.intermediate};
  }
  return {};
}

/// Hugging Face style tensor names for a decoder checkpoint.
inline std::string hf_name(int layer, ProjectionKind kind) {
  return "model.layers." + std::to_string(layer) + "." + std::string(kind_block(kind)) + "." +
         std::string(kind_name(kind)) + "_proj.weight";
}

inline std::map<std::string, Matrix> tiny_checkpoint(int layers, std::uint64_t seed, const TinyDims& d = {}) {
  std::map<std::string, Matrix> tensors;
  for (int layer = 0; layer < layers; ++layer) {
    for (ProjectionKind k : kAllKinds) {
      const MatrixShape s = tiny_shape(k, d);
      tensors[hf_name(layer, k)] = gaussian_matrix(s.rows, s.cols, seed * 1000 + layer * 10 + kind_index(k));
    }
  }
  tensors["model.embed_tokens.weight"] = gaussian_matrix(8, d.hidden, seed + 99);
  tensors["model.norm.weight"] = Matrix::Ones(1, d.hidden);
  return tensors;
}

/// Code of the wshape::Error thrown by f, or nothing if it returned normally.
template <typename F>
std::optional<ErrorCode> error_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

struct TempDir {
  std::filesystem::path path;

  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("wshape-" + tag + "-" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

} // namespace wshape::testing
