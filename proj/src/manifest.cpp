#include "cohortlens/manifest.hpp"

#include <algorithm>
#include <array>
#include <fstream>

#include <openssl/evp.h>

#include <json.hpp>

#include "cohortlens/error.hpp"
#include "cohortlens/ingest.hpp"

namespace cohortlens {

std::string sha256_hex(std::string_view bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md.data(), &len, EVP_sha256(), nullptr) != 1)
    throw IoError("SHA-256 digest failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[md[i] >> 4]);
    out.push_back(kHex[md[i] & 0xf]);
  }
  return out;
}

std::string sha256_file(const std::filesystem::path& file) { return sha256_hex(read_text_file(file)); }

void RunManifest::add_config(const std::filesystem::path& file) {
  config.push_back({file.generic_string(), sha256_file(file)});
}

void RunManifest::add_input(const std::filesystem::path& file) {
  inputs.push_back({file.generic_string(), sha256_file(file)});
}

void RunManifest::collect_outputs(const std::filesystem::path& dir) {
  outputs.clear();
  for (const auto& entry : std::filesystem::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(entry.path(), dir);
    if (rel == kManifestName) continue;
    outputs.push_back({rel.generic_string(), sha256_file(entry.path())});
  }
  std::sort(outputs.begin(), outputs.end(), [](const auto& a, const auto& b) { return a.path < b.path; });
}

namespace {

nlohmann::ordered_json digests(const std::vector<FileDigest>& v) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& d : v) arr.push_back({{"path", d.path}, {"sha256", d.sha256}});
  return arr;
}

std::vector<FileDigest> digests_from(const nlohmann::json& j) {
  std::vector<FileDigest> v;
  for (const auto& d : j) v.push_back({d.at("path").get<std::string>(), d.at("sha256").get<std::string>()});
  return v;
}

}  // namespace

std::string RunManifest::to_json() const {
  nlohmann::ordered_json j;
  j["tool_version"] = tool_version;
  j["command"] = command;
  j["arguments"] = arguments;
  j["seeds"] = seeds;
  j["config"] = digests(config);
  j["inputs"] = digests(inputs);
  j["outputs"] = digests(outputs);
  j["output_dir"] = output_dir;
  return j.dump(2) + "\n";
}

RunManifest RunManifest::from_json(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text.begin(), text.end());
    RunManifest m;
    m.tool_version = j.at("tool_version").get<std::string>();
    m.command = j.at("command").get<std::string>();
    m.arguments = j.at("arguments").get<std::vector<std::string>>();
    m.seeds = j.at("seeds").get<std::map<std::string, std::uint64_t>>();
    m.config = digests_from(j.at("config"));
    m.inputs = digests_from(j.at("inputs"));
    m.outputs = digests_from(j.at("outputs"));
    m.output_dir = j.at("output_dir").get<std::string>();
    return m;
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("manifest: ") + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("manifest", std::string("manifest: ") + e.what());
  }
}

void write_manifest(RunManifest manifest, const std::filesystem::path& dir) {
  manifest.collect_outputs(dir);
  write_text_file(dir / kManifestName, manifest.to_json());
}

std::vector<std::string> verify_manifest(const std::filesystem::path& dir) {
  const auto m = RunManifest::from_json(read_text_file(dir / kManifestName));
  std::vector<std::string> bad;
  const auto check = [&](const FileDigest& d, const std::filesystem::path& file) {
    std::error_code ec;
    if (!std::filesystem::is_regular_file(file, ec) || sha256_file(file) != d.sha256) bad.push_back(d.path);
  };
  for (const auto& d : m.config) check(d, d.path);
  for (const auto& d : m.inputs) check(d, d.path);
  for (const auto& d : m.outputs) check(d, dir / d.path);
  return bad;
}

}  // namespace cohortlens
