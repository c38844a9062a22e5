#include "wshape/characterizer.hpp"
#include "wshape/digest.hpp"
#include "wshape/distance.hpp"
#include "wshape/error.hpp"
#include "wshape/parallel.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <sstream>

namespace wshape {

KindPair make_kind_pair(ProjectionKind a, ProjectionKind b) {
  return kind_index(a) <= kind_index(b) ? KindPair{a, b} : KindPair{b, a};
}

std::string kind_pair_name(const KindPair& pair) {
  return std::string(kind_name(pair.first)) + "-" + std::string(kind_name(pair.second));
}

std::optional<std::size_t> CharacteristicTable::group_of(ProjectionKind kind) const {
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (groups[g].reference == kind) return g;
    for (ProjectionKind m : groups[g].members) {
      if (m == kind) return g;
    }
  }
  return std::nullopt;
}

void CharacteristicTable::validate() const {
  std::array<int, kNumKinds> seen{};
  for (const auto& group : groups) {
    ++seen[kind_index(group.reference)];
    for (ProjectionKind m : group.members) {
      ++seen[kind_index(m)];
      auto it = diagnostics.find(make_kind_pair(group.reference, m));
      if (it != diagnostics.end() && it->second.cls.kind != DistributionKind::PowerLaw) {
        throw Error(ErrorCode::IncompleteTable, "member " + std::string(kind_name(m)) +
                                                    " is not power-law against its reference " +
                                                    std::string(kind_name(group.reference)));
      }
    }
  }
  for (ProjectionKind k : kAllKinds) {
    const int count = seen[kind_index(k)];
    if (count != 1) {
      throw Error(ErrorCode::IncompleteTable, "kind " + std::string(kind_name(k)) + " appears " +
                                                  std::to_string(count) + " times");
    }
  }
}

std::string CharacteristicTable::summary() const {
  std::ostringstream out;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (g) out << ", ";
    out << "{" << kind_name(groups[g].reference) << ": [";
    for (std::size_t i = 0; i < groups[g].members.size(); ++i) {
      if (i) out << ", ";
      out << kind_name(groups[g].members[i]);
    }
    out << "]}";
  }
  return out.str();
}

ReferenceOrder canonical_reference_order() {
  return ReferenceOrder(kAllKinds.begin(), kAllKinds.end());
}

ReferenceOrder complete_reference_order(std::span<const ProjectionKind> partial) {
  std::array<bool, kNumKinds> used{};
  ReferenceOrder order;
  for (ProjectionKind k : partial) {
    if (used[kind_index(k)]) {
      throw Error(ErrorCode::InvalidConfig, "kind " + std::string(kind_name(k)) + " repeated in reference order");
    }
    used[kind_index(k)] = true;
    order.push_back(k);
  }
  for (ProjectionKind k : kAllKinds) {
    if (!used[kind_index(k)]) order.push_back(k);
  }
  return order;
}

namespace {

using K = ProjectionKind;

const std::vector<std::pair<std::string, ReferenceOrder>>& presets() {
  // The 3B and 8B tables pick up ahead of v for their second group.
  static const std::vector<std::pair<std::string, ReferenceOrder>> table = {
      {"default", canonical_reference_order()},
      {"llama-3.2-1b", canonical_reference_order()},
      {"llama-3.2-3b", {K::Q, K::K, K::O, K::Gate, K::Up, K::V, K::Down}},
      {"llama-3.2-8b", {K::Q, K::K, K::O, K::Gate, K::Up, K::V, K::Down}},
      {"smollm2-135m", canonical_reference_order()},
      {"smollm2-1.7b", canonical_reference_order()},
  };
  return table;
}

PairClass classify_pool(const Msv& a, const Msv& b) {
  PairClass out;
  try {
    out.cls = classify_distribution(remove_zeros(pairwise_dsv(a, b)));
  } catch (const Error& e) {
    if (e.code() != ErrorCode::TooFewSamples && e.code() != ErrorCode::DegenerateSamples &&
        e.code() != ErrorCode::ZeroNorm) {
      throw;
    }
    constexpr double nan = std::numeric_limits<double>::quiet_NaN();
    out.fitted = false;
    out.note = e.what();
    out.cls.kind = DistributionKind::NonPowerLaw;
    out.cls.score = nan;
    out.cls.diagnostics = {nan, nan, nan, 0};
  }
  return out;
}

void check_msvs(std::span<const Msv> msvs) {
  if (msvs.size() != kNumKinds) {
    throw Error(ErrorCode::MissingProjection, "expected 7 MSVs, got " + std::to_string(msvs.size()));
  }
  std::array<bool, kNumKinds> present{};
  for (const Msv& m : msvs) {
    if (present[kind_index(m.kind)]) {
      throw Error(ErrorCode::MissingProjection, "duplicate MSV for " + std::string(kind_name(m.kind)));
    }
    present[kind_index(m.kind)] = true;
    if (m.rank != msvs.front().rank) {
      throw Error(ErrorCode::RankMismatch,
                  std::to_string(m.rank) + " vs " + std::to_string(msvs.front().rank));
    }
  }
}

} // namespace

std::vector<std::string> reference_order_presets() {
  std::vector<std::string> names;
  for (const auto& [name, order] : presets()) names.push_back(name);
  return names;
}

std::optional<ReferenceOrder> reference_order_preset(const std::string& name) {
  for (const auto& [key, order] : presets()) {
    if (key == name) return order;
  }
  return std::nullopt;
}

PairClassMap pair_class_matrix(std::span<const Msv> msvs, unsigned threads) {
  check_msvs(msvs);
  std::array<const Msv*, kNumKinds> by_kind{};
  for (const Msv& m : msvs) by_kind[kind_index(m.kind)] = &m;

  std::vector<KindPair> pairs;
  for (std::size_t i = 0; i < kNumKinds; ++i) {
    for (std::size_t j = i; j < kNumKinds; ++j) pairs.emplace_back(kAllKinds[i], kAllKinds[j]);
  }
  std::vector<PairClass> results(pairs.size());
  parallel_for(
      pairs.size(),
      [&](std::size_t p) {
        results[p] = classify_pool(*by_kind[kind_index(pairs[p].first)], *by_kind[kind_index(pairs[p].second)]);
      },
      threads);

  PairClassMap out;
  for (std::size_t p = 0; p < pairs.size(); ++p) out.emplace(pairs[p], std::move(results[p]));
  return out;
}

std::vector<CharacteristicGroup> greedy_groups(const PairClassMap& classes, const ReferenceOrder& order) {
  const ReferenceOrder full = complete_reference_order(order);
  std::array<bool, kNumKinds> assigned{};
  std::vector<CharacteristicGroup> groups;
  for (ProjectionKind reference : full) {
    if (assigned[kind_index(reference)]) continue;
    assigned[kind_index(reference)] = true;
    CharacteristicGroup group{reference, {}};
    // Members are listed in canonical order.
    for (ProjectionKind candidate : kAllKinds) {
      if (assigned[kind_index(candidate)]) continue;
      auto it = classes.find(make_kind_pair(reference, candidate));
      if (it == classes.end()) {
        throw Error(ErrorCode::IncompleteTable, "no class for " + kind_pair_name(make_kind_pair(reference, candidate)));
      }
      if (it->second.cls.kind == DistributionKind::PowerLaw) {
        group.members.push_back(candidate);
        assigned[kind_index(candidate)] = true;
      }
    }
    groups.push_back(std::move(group));
  }
  return groups;
}

CharacteristicTable characterize_model(std::span<const Msv> msvs, const ReferenceOrder& order,
                                       const std::string& model_id, unsigned threads) {
  CharacteristicTable table;
  table.model_id = model_id;
  table.diagnostics = pair_class_matrix(msvs, threads);
  table.rank = msvs.front().rank;
  table.groups = greedy_groups(table.diagnostics, order);
  return table;
}

nlohmann::json to_json(const DistributionClass& cls) {
  auto num = [](double v) -> nlohmann::json { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); };
  return {
      {"class", distribution_kind_name(cls.kind)},
      {"score", num(cls.score)},
      {"pareto_ks", num(cls.diagnostics.pareto_ks)},
      {"normal_ks", num(cls.diagnostics.normal_ks)},
      {"skewness", num(cls.diagnostics.skewness)},
      {"sample_count", cls.diagnostics.sample_count},
  };
}

namespace {

nlohmann::json groups_json(const CharacteristicTable& table) {
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& g : table.groups) {
    nlohmann::json members = nlohmann::json::array();
    for (ProjectionKind m : g.members) members.push_back(kind_name(m));
    groups.push_back({{"reference", kind_name(g.reference)}, {"members", members}});
  }
  return groups;
}

ProjectionKind require_kind(const std::string& name) {
  auto kind = parse_kind(name);
  if (!kind) throw Error(ErrorCode::InvalidConfig, "unknown projection kind '" + name + "'");
  return *kind;
}

double num_or_nan(const nlohmann::json& v) {
  return v.is_number() ? v.get<double>() : std::numeric_limits<double>::quiet_NaN();
}

} // namespace

nlohmann::json to_json(const CharacteristicTable& table) {
  nlohmann::json diagnostics = nlohmann::json::object();
  for (const auto& [pair, pc] : table.diagnostics) {
    nlohmann::json entry = to_json(pc.cls);
    entry["fitted"] = pc.fitted;
    if (!pc.note.empty()) entry["note"] = pc.note;
    diagnostics[kind_pair_name(pair)] = std::move(entry);
  }
  return {
      {"model_id", table.model_id},
      {"rank", table.rank},
      {"groups", groups_json(table)},
      {"diagnostics", diagnostics},
  };
}

CharacteristicTable characteristic_table_from_json(const nlohmann::json& doc) {
  CharacteristicTable table;
  try {
    table.model_id = doc.value("model_id", "");
    table.rank = doc.value("rank", 0);
    for (const auto& g : doc.at("groups")) {
      CharacteristicGroup group;
      group.reference = require_kind(g.at("reference").get<std::string>());
      for (const auto& m : g.value("members", nlohmann::json::array())) {
        group.members.push_back(require_kind(m.get<std::string>()));
      }
      table.groups.push_back(std::move(group));
    }
    if (doc.contains("diagnostics")) {
      for (const auto& [key, entry] : doc.at("diagnostics").items()) {
        const auto dash = key.find('-');
        if (dash == std::string::npos) throw Error(ErrorCode::InvalidConfig, "bad diagnostics key " + key);
        PairClass pc;
        pc.cls.kind = entry.at("class").get<std::string>() == distribution_kind_name(DistributionKind::PowerLaw)
                          ? DistributionKind::PowerLaw
                          : DistributionKind::NonPowerLaw;
        pc.cls.score = num_or_nan(entry.value("score", nlohmann::json()));
        pc.cls.diagnostics.pareto_ks = num_or_nan(entry.value("pareto_ks", nlohmann::json()));
        pc.cls.diagnostics.normal_ks = num_or_nan(entry.value("normal_ks", nlohmann::json()));
        pc.cls.diagnostics.skewness = num_or_nan(entry.value("skewness", nlohmann::json()));
        pc.cls.diagnostics.sample_count = entry.value("sample_count", std::size_t{0});
        pc.fitted = entry.value("fitted", true);
        pc.note = entry.value("note", "");
        table.diagnostics[make_kind_pair(require_kind(key.substr(0, dash)), require_kind(key.substr(dash + 1)))] =
            std::move(pc);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("characteristic table: ") + e.what());
  }
  table.validate();
  return table;
}

std::string table_digest(const CharacteristicTable& table) {
  const nlohmann::json core = {
      {"model_id", table.model_id},
      {"rank", table.rank},
      {"groups", groups_json(table)},
  };
  return sha256_hex(core.dump());
}

} // namespace wshape
