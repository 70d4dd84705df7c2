#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace cohortlens {

inline constexpr const char* kToolVersion = "0.1.0";

/// Lower-case hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& file);
std::string sha256_hex(std::string_view bytes);

struct FileDigest {
  std::string path;  // as given (inputs) or relative to the output directory (outputs)
  std::string sha256;
  bool operator==(const FileDigest&) const = default;
};

struct RunManifest {
  std::string tool_version = kToolVersion;
  std::string command;
  std::vector<std::string> arguments;  // normalized plan flags, excluding --jobs and --out
  std::map<std::string, std::uint64_t> seeds;
  std::vector<FileDigest> config;
  std::vector<FileDigest> inputs;
  std::vector<FileDigest> outputs;
  std::string output_dir;

  void add_config(const std::filesystem::path& file);
  void add_input(const std::filesystem::path& file);
  /// Hashes every regular file under the output directory except the manifest itself.
  void collect_outputs(const std::filesystem::path& dir);
  std::string to_json() const;
  static RunManifest from_json(std::string_view text);
  bool operator==(const RunManifest&) const = default;
};

inline constexpr const char* kManifestName = "manifest.json";

/// Writes `dir/manifest.json` after collecting outputs.
void write_manifest(RunManifest manifest, const std::filesystem::path& dir);
/// Paths whose current hash differs from the recorded one (missing files included).
std::vector<std::string> verify_manifest(const std::filesystem::path& dir);

}  // namespace cohortlens
