#include "doctest.h"

#include "support/fixtures.hpp"
#include "support/schema_check.hpp"
#include "wshape/digest.hpp"
#include "wshape/lora.hpp"
#include "wshape/report.hpp"

#include <fstream>
#include <sstream>

using namespace wshape;
using namespace wshape::testing;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

SchemaChecker schema(const std::string& name) {
  return SchemaChecker(read_json_file(std::filesystem::path(WSHAPE_SCHEMA_DIR) / (name + ".schema.json")));
}

std::string joined(const std::vector<std::string>& errors) {
  std::string out;
  for (const auto& e : errors) out += e + "\n";
  return out;
}

} // namespace

TEST_CASE("SHA-256 known answers") {
  CHECK(sha256_hex(std::string_view("")) == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex(std::string_view("abc")) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  TempDir dir("sha");
  std::ofstream(dir.path / "f.txt") << "abc";
  CHECK(sha256_file(dir.path / "f.txt") == sha256_hex(std::string_view("abc")));
  CHECK(error_of([&] { sha256_file(dir.path / "none"); }) == ErrorCode::UnreadableFile);
}

TEST_CASE("CSV writer quotes and keeps full precision") {
  TempDir dir("csv");
  CsvWriter csv(dir.path / "t.csv", {"name", "value", "n"});
  csv.cell("plain").cell(0.1).cell(3LL);
  csv.end_row();
  csv.cell("a,\"b\"").cell(1.0 / 3.0).cell(-1LL);
  csv.end_row();
  csv.close();
  CHECK(slurp(dir.path / "t.csv") == "name,value,n\nplain,0.1,3\n\"a,\"\"b\"\"\",0.3333333333333333,-1\n");
  CHECK(std::stod(format_number(1.0 / 3.0)) == 1.0 / 3.0);
  CHECK(format_number(2.0) == "2");

  CsvWriter bare(dir.path / "bare.csv", {});
  bare.cell(1LL);
  bare.end_row();
  bare.close();
  CHECK(slurp(dir.path / "bare.csv") == "1\n");
}

TEST_CASE("JSON files") {
  TempDir dir("json");
  write_json_file(dir.path / "sub" / "x.json", {{"a", 1}});
  CHECK(read_json_file(dir.path / "sub" / "x.json") == nlohmann::json{{"a", 1}});
  std::ofstream(dir.path / "bad.json") << "{nope";
  CHECK(error_of([&] { read_json_file(dir.path / "bad.json"); }) == ErrorCode::InvalidConfig);
  CHECK(error_of([&] { read_json_file(dir.path / "missing.json"); }) == ErrorCode::UnreadableFile);
}

TEST_CASE("run digest covers inputs, config and seed but not outputs or time") {
  TempDir dir("run");
  std::ofstream(dir.path / "in.bin") << "weights";
  std::filesystem::create_directories(dir.path / "shards");
  std::ofstream(dir.path / "shards" / "b") << "2";
  std::ofstream(dir.path / "shards" / "a") << "1";

  RunManifest m;
  m.command = "analyze";
  m.arguments = {"analyze", "x"};
  m.seed = 7;
  m.config = {{"rank", 16}};
  m.add_input(dir.path / "in.bin");
  m.add_input(dir.path / "shards");
  m.created_at = utc_timestamp();
  const std::string base = m.run_digest();
  CHECK(m.inputs[0].sha256 == sha256_hex(std::string_view("weights")));

  RunManifest later = m;
  later.created_at = "2000-01-01T00:00:00Z";
  std::ofstream(dir.path / "out.csv") << "x";
  later.add_output(dir.path, "out.csv");
  CHECK(later.run_digest() == base);
  CHECK(later.outputs[0].path == "out.csv");

  RunManifest seeded = m;
  seeded.seed = 8;
  CHECK(seeded.run_digest() != base);
  RunManifest configured = m;
  configured.config["rank"] = 8;
  CHECK(configured.run_digest() != base);
  CHECK(configured.config_digest() != m.config_digest());

  std::ofstream(dir.path / "shards" / "a") << "changed";
  RunManifest touched = m;
  touched.inputs.clear();
  touched.add_input(dir.path / "in.bin");
  touched.add_input(dir.path / "shards");
  CHECK(touched.run_digest() != base);

  later.write(dir.path);
  const nlohmann::json doc = read_json_file(dir.path / kRunManifestFile);
  CHECK(doc.at("run_digest") == base);
  CHECK(doc.at("tool_version") == kToolVersion);
  CHECK(joined(schema("run_manifest").check(doc)) == "");
  CHECK(error_of([&] { m.add_input(dir.path / "absent"); }) == ErrorCode::UnreadableFile);
}

TEST_CASE("fit JSON uses alpha for the tail index") {
  ParetoFit fit;
  fit.shape = 0.7;
  const nlohmann::json doc = to_json(fit);
  CHECK(doc.at("alpha") == 0.7);
  CHECK(to_json(histogram(std::vector<double>{1, 2, 3}, 2)).at("counts").size() == 2);
  CHECK(to_json(polar_histogram(std::vector<double>{1, 2, 3}, 4)).at("counts").size() == 4);
}

TEST_CASE("the schema checker rejects what it should") {
  const SchemaChecker s(nlohmann::json{
      {"type", "object"},
      {"required", {"a"}},
      {"additionalProperties", false},
      {"properties",
       {{"a", {{"type", "integer"}, {"minimum", 0}}},
        {"b", {{"type", "string"}, {"pattern", "^[0-9a-f]{4}$"}}},
        {"c", {{"type", "array"}, {"items", {{"enum", {"x", "y"}}}}, {"maxItems", 2}}}}}});
  CHECK(s.check({{"a", 1}, {"b", "00ff"}, {"c", {"x"}}}).empty());
  CHECK_FALSE(s.check({{"b", "00ff"}}).empty());
  CHECK_FALSE(s.check({{"a", -1}}).empty());
  CHECK_FALSE(s.check({{"a", 1}, {"b", "zz"}}).empty());
  CHECK_FALSE(s.check({{"a", 1}, {"c", {"z"}}}).empty());
  CHECK_FALSE(s.check({{"a", 1}, {"c", {"x", "x", "y"}}}).empty());
  CHECK_FALSE(s.check({{"a", 1}, {"d", 0}}).empty());
  CHECK_FALSE(s.check({{"a", 1.5}}).empty());
}

TEST_CASE("library documents match their schemas") {
  using K = ProjectionKind;
  const auto msvs = random_msvs(16, 16, 2);
  CharacteristicTable table = characterize_model(msvs, canonical_reference_order(), "rand");
  nlohmann::json table_doc = to_json(table);
  CHECK(joined(schema("characteristic_table").check(table_doc)) == "");
  table_doc["run_digest"] = std::string(64, 'a');
  CHECK(joined(schema("characteristic_table").check(table_doc)) == "");
  table_doc["groups"][0]["reference"] = "qkv";
  CHECK_FALSE(schema("characteristic_table").check(table_doc).empty());

  const CharacteristicTable grouped{"ref", 16, {{K::Q, {K::K, K::Gate}}, {K::V, {K::O, K::Up, K::Down}}}, {}};
  const LoraInitBundle bundle = reshape_lora_init(decoder_target("t", 1, 32, 16, 48, 4), grouped,
                                                  default_generator_config("pareto"), 1);
  nlohmann::json manifest = adapter_manifest(bundle);
  CHECK(joined(schema("adapter_manifest").check(manifest)) == "");
  manifest["adapter_sha256"] = "not-a-digest";
  CHECK_FALSE(schema("adapter_manifest").check(manifest).empty());

  const nlohmann::json report = to_json(validate_bundle(bundle, grouped));
  CHECK(joined(schema("validation_report").check(report)) == "");
}
