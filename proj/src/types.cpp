#include "wshape/error.hpp"
#include "wshape/types.hpp"

#include <algorithm>
#include <cctype>
#include <string>

namespace wshape {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
  case ErrorCode::MissingProjection: return "MissingProjection";
  case ErrorCode::ShapeMismatch: return "ShapeMismatch";
  case ErrorCode::UnreadableFile: return "UnreadableFile";
  case ErrorCode::IoFailure: return "IoFailure";
  case ErrorCode::DuplicateName: return "DuplicateName";
  case ErrorCode::NonFinite: return "NonFinite";
  case ErrorCode::RankTooLarge: return "RankTooLarge";
  case ErrorCode::RankMismatch: return "RankMismatch";
  case ErrorCode::ZeroNorm: return "ZeroNorm";
  case ErrorCode::LengthMismatch: return "LengthMismatch";
  case ErrorCode::TooFewSamples: return "TooFewSamples";
  case ErrorCode::DegenerateSamples: return "DegenerateSamples";
  case ErrorCode::IncompleteTable: return "IncompleteTable";
  case ErrorCode::ShapeError: return "ShapeError";
  case ErrorCode::InvalidConfig: return "InvalidConfig";
  }
  return "Unknown";
}

std::string_view kind_name(ProjectionKind kind) {
  switch (kind) {
  case ProjectionKind::Q: return "q";
  case ProjectionKind::K: return "k";
  case ProjectionKind::V: return "v";
  case ProjectionKind::O: return "o";
  case ProjectionKind::Gate: return "gate";
  case ProjectionKind::Up: return "up";
  case ProjectionKind::Down: return "down";
  }
  return "?";
}

std::optional<ProjectionKind> parse_kind(std::string_view text) {
  std::string lowered(text);
  std::transform(lowered.begin(), lowered.end(), lowered.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  for (std::string_view suffix : {"_proj", "-proj"}) {
    if (lowered.size() > suffix.size() && lowered.ends_with(suffix)) {
      lowered.resize(lowered.size() - suffix.size());
      break;
    }
  }
  for (ProjectionKind kind : kAllKinds) {
    if (lowered == kind_name(kind)) return kind;
  }
  return std::nullopt;
}

std::string_view kind_block(ProjectionKind kind) {
  switch (kind) {
  case ProjectionKind::Q:
  case ProjectionKind::K:
  case ProjectionKind::V:
  case ProjectionKind::O: return "self_attn";
  default: return "mlp";
  }
}

} // namespace wshape
