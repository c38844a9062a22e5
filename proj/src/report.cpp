#include "wshape/report.hpp"
#include "wshape/digest.hpp"
#include "wshape/error.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>

namespace wshape {

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm utc{};
  gmtime_r(&now, &utc);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &utc);
  return buf;
}

std::string digest_path(const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(path)) return sha256_file(path);
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(path)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::string listing;
  for (const auto& f : files) listing += f.filename().string() + " " + sha256_file(f) + "\n";
  return sha256_hex(listing);
}

void RunManifest::add_input(const std::filesystem::path& path) {
  inputs.push_back({path.string(), digest_path(path)});
}

void RunManifest::add_output(const std::filesystem::path& dir, const std::string& relative) {
  outputs.push_back({relative, sha256_file(dir / relative)});
}

std::string RunManifest::config_digest() const { return sha256_hex(config.dump()); }

std::string RunManifest::run_digest() const {
  nlohmann::json ins = nlohmann::json::array();
  for (const auto& in : inputs) ins.push_back({in.path, in.sha256});
  const nlohmann::json core = {
      {"command", command},
      {"tool_version", kToolVersion},
      {"inputs", ins},
      {"config_digest", config_digest()},
      {"seed", seed ? nlohmann::json(*seed) : nlohmann::json()},
  };
  return sha256_hex(core.dump());
}

nlohmann::json RunManifest::to_json() const {
  auto list = [](const std::vector<ArtifactDigest>& items) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& item : items) out.push_back({{"path", item.path}, {"sha256", item.sha256}});
    return out;
  };
  return {
      {"command", command},
      {"arguments", arguments},
      {"tool_version", kToolVersion},
      {"seed", seed ? nlohmann::json(*seed) : nlohmann::json()},
      {"config", config},
      {"config_digest", config_digest()},
      {"inputs", list(inputs)},
      {"outputs", list(outputs)},
      {"created_at", created_at},
      {"run_digest", run_digest()},
  };
}

void RunManifest::write(const std::filesystem::path& dir) const { write_json_file(dir / kRunManifestFile, to_json()); }

void write_json_file(const std::filesystem::path& path, const nlohmann::json& doc) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << doc.dump(2) << '\n';
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::UnreadableFile, "cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, path.string() + ": " + e.what());
  }
}

std::string format_number(double value) {
  if (!std::isfinite(value)) return std::isnan(value) ? "nan" : (value > 0 ? "inf" : "-inf");
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header) : path_(path) {
  if (header.empty()) return;
  for (const auto& h : header) cell(h);
  end_row();
}

CsvWriter& CsvWriter::cell(const std::string& text) {
  if (row_started_) buffer_ += ',';
  if (text.find_first_of(",\"\n") != std::string::npos) {
    buffer_ += '"';
    for (char c : text) {
      if (c == '"') buffer_ += '"';
      buffer_ += c;
    }
    buffer_ += '"';
  } else {
    buffer_ += text;
  }
  row_started_ = true;
  return *this;
}

CsvWriter& CsvWriter::cell(double value) { return cell(format_number(value)); }

CsvWriter& CsvWriter::cell(long long value) { return cell(std::to_string(value)); }

void CsvWriter::end_row() {
  buffer_ += '\n';
  row_started_ = false;
}

void CsvWriter::close() {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  std::ofstream out(path_, std::ios::binary | std::ios::trunc);
  out << buffer_;
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path_.string());
}

nlohmann::json to_json(const ParetoFit& fit) {
  return {
      {"alpha", fit.shape},           {"location", fit.location},
      {"scale", fit.scale},           {"ks_statistic", fit.ks_statistic},
      {"log_likelihood", fit.log_likelihood}, {"sample_count", fit.sample_count},
  };
}

nlohmann::json to_json(const NormalFit& fit) {
  return {
      {"mean", fit.mean},
      {"stddev", fit.stddev},
      {"ks_statistic", fit.ks_statistic},
      {"sample_count", fit.sample_count},
  };
}

nlohmann::json to_json(const Histogram& h) {
  return {{"edges", h.edges}, {"counts", h.counts}, {"density", h.density}};
}

nlohmann::json to_json(const PolarHistogram& h) {
  return {
      {"min_value", h.min_value},
      {"max_value", h.max_value},
      {"sector_start_degrees", h.sector_start_degrees},
      {"counts", h.counts},
  };
}

} // namespace wshape
