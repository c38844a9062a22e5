#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

namespace wshape {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// The seven per-layer projections of a decoder block, in canonical order.
enum class ProjectionKind : int { Q = 0, K, V, O, Gate, Up, Down };

inline constexpr std::size_t kNumKinds = 7;

inline constexpr std::array<ProjectionKind, kNumKinds> kAllKinds = {
    ProjectionKind::Q,    ProjectionKind::K,  ProjectionKind::V,   ProjectionKind::O,
    ProjectionKind::Gate, ProjectionKind::Up, ProjectionKind::Down};

inline constexpr std::size_t kind_index(ProjectionKind kind) {
  return static_cast<std::size_t>(kind);
}

/// Short lowercase name: "q", "k", "v", "o", "gate", "up", "down".
std::string_view kind_name(ProjectionKind kind);

/// Accepts the short names above, case-insensitively, with an optional
/// "_proj" / "-proj" suffix.
std::optional<ProjectionKind> parse_kind(std::string_view text);

/// "self_attn" for Q/K/V/O, "mlp" for Gate/Up/Down.
std::string_view kind_block(ProjectionKind kind);

} // namespace wshape
