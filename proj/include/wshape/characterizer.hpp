#pragma once

#include "wshape/spectral.hpp"
#include "wshape/stats.hpp"
#include "wshape/types.hpp"

#include "json.hpp"

#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace wshape {

/// Unordered kind pair, stored with the lower canonical index first.
using KindPair = std::pair<ProjectionKind, ProjectionKind>;

KindPair make_kind_pair(ProjectionKind a, ProjectionKind b);
std::string kind_pair_name(const KindPair& pair); // "q-k"

struct PairClass {
  DistributionClass cls;
  /// False when the pool was too small or constant to fit; the class is then
  /// NonPowerLaw and `note` says why.
  bool fitted = true;
  std::string note;
};

using PairClassMap = std::map<KindPair, PairClass>;

struct CharacteristicGroup {
  ProjectionKind reference = ProjectionKind::Q;
  std::vector<ProjectionKind> members;

  bool operator==(const CharacteristicGroup&) const = default;
};

struct CharacteristicTable {
  std::string model_id;
  int rank = 0;
  std::vector<CharacteristicGroup> groups;
  PairClassMap diagnostics;

  /// Index of the group holding `kind`, as reference or member.
  std::optional<std::size_t> group_of(ProjectionKind kind) const;

  /// Partition, distinct references, and PowerLaw member pools. Throws
  /// IncompleteTable on the first violation.
  void validate() const;

  /// Groups only, e.g. "{q: [k, gate]}, {v: [o, up, down]}".
  std::string summary() const;
};

using ReferenceOrder = std::vector<ProjectionKind>;

ReferenceOrder canonical_reference_order();

/// Complete a partial order with the remaining kinds in canonical order.
/// Throws InvalidConfig on duplicates.
ReferenceOrder complete_reference_order(std::span<const ProjectionKind> partial);

/// Named reference orders per model family.
std::vector<std::string> reference_order_presets();
std::optional<ReferenceOrder> reference_order_preset(const std::string& name);

/// 21 cross-kind and 7 within-kind classes. Pools that cannot be fitted are
/// marked NonPowerLaw with `fitted` false.
PairClassMap pair_class_matrix(std::span<const Msv> msvs, unsigned threads = 0);

/// Greedy grouping over cross-kind pools: the first unassigned kind in
/// `order` becomes a reference and claims every unassigned kind whose pool
/// with it is PowerLaw.
CharacteristicTable characterize_model(std::span<const Msv> msvs, const ReferenceOrder& order,
                                       const std::string& model_id = "", unsigned threads = 0);

/// Grouping step alone, on precomputed classes.
std::vector<CharacteristicGroup> greedy_groups(const PairClassMap& classes, const ReferenceOrder& order);

nlohmann::json to_json(const DistributionClass& cls);
nlohmann::json to_json(const CharacteristicTable& table);
CharacteristicTable characteristic_table_from_json(const nlohmann::json& doc);

/// SHA-256 of the compact JSON of model id, rank and groups.
std::string table_digest(const CharacteristicTable& table);

} // namespace wshape
