#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace mrf::cli {

inline constexpr const char* kRunManifestFile = "run.json";

std::string sha1_hex(std::string_view bytes);

// Same ids `git hash-object` and `git write-tree` would give: a blob for a
// regular file, a tree (recursively, sorted the way git sorts) for a directory.
std::string git_blob_id(std::string_view content);
std::string git_path_id(const std::filesystem::path& path);

struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  nlohmann::json config;  // fully resolved fields; accepted back by --config
  std::uint64_t seed = 0;
  std::string config_hash;
  std::map<std::string, std::string> inputs;  // field name -> git-style content id
  std::string started_at;
  std::string finished_at;  // empty while the run is in progress
  std::string status = "running";
};

// Canonical hash of a resolved config (sorted keys, compact dump).
std::string config_hash(const nlohmann::json& config);
std::string utc_timestamp();

void to_json(nlohmann::json& j, const RunManifest& m);
void from_json(const nlohmann::json& j, RunManifest& m);

void write_manifest(const RunManifest& m, const std::filesystem::path& dir);
RunManifest read_manifest(const std::filesystem::path& file);

}  // namespace mrf::cli
