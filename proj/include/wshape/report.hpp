#pragma once

#include "wshape/stats.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace wshape {

struct ArtifactDigest {
  std::string path; // as given for inputs, relative to the run directory for outputs
  std::string sha256;
};

/// Provenance record written as run_manifest.json next to a command's outputs.
/// The run digest covers command, version, inputs, config and seed; outputs and
/// the timestamp are listed but not hashed, so artifacts can embed the digest
/// and reruns reproduce it.
struct RunManifest {
  std::string command;
  std::vector<std::string> arguments;
  std::optional<std::uint64_t> seed;
  nlohmann::json config = nlohmann::json::object();
  std::vector<ArtifactDigest> inputs;
  std::vector<ArtifactDigest> outputs;
  std::string created_at;

  /// A file is hashed directly; a directory hashes the sorted listing of its
  /// regular files' names and digests.
  void add_input(const std::filesystem::path& path);
  void add_output(const std::filesystem::path& dir, const std::string& relative);

  std::string config_digest() const;
  std::string run_digest() const;
  nlohmann::json to_json() const;
  void write(const std::filesystem::path& dir) const;
};

inline constexpr const char* kRunManifestFile = "run_manifest.json";
inline constexpr const char* kToolVersion = WSHAPE_VERSION;

std::string utc_timestamp();
std::string digest_path(const std::filesystem::path& path);

void write_json_file(const std::filesystem::path& path, const nlohmann::json& doc);
nlohmann::json read_json_file(const std::filesystem::path& path);

/// Comma-separated rows with a header line, written on close(); numbers use
/// round-trip precision.
class CsvWriter {
public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);
  CsvWriter& cell(const std::string& text);
  CsvWriter& cell(double value);
  CsvWriter& cell(long long value);
  void end_row();
  void close();

private:
  std::filesystem::path path_;
  std::string buffer_;
  bool row_started_ = false;
};

std::string format_number(double value);

nlohmann::json to_json(const ParetoFit& fit);
nlohmann::json to_json(const NormalFit& fit);
nlohmann::json to_json(const Histogram& h);
nlohmann::json to_json(const PolarHistogram& h);

} // namespace wshape
