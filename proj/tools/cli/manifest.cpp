#include "manifest.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <sstream>

#include <openssl/evp.h>

#include "mrf/error.hpp"

namespace fs = std::filesystem;

namespace mrf::cli {

namespace {

std::string sha1_raw(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha1(), nullptr) != 1) {
    throw StateError("SHA-1 digest failed");
  }
  return std::string(reinterpret_cast<const char*>(digest), len);
}

std::string to_hex(std::string_view raw) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  for (unsigned char c : raw) {
    out += kDigits[c >> 4];
    out += kDigits[c & 15];
  }
  return out;
}

std::string read_all(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataError("cannot read '" + file.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string object_raw(std::string_view type, std::string_view body) {
  std::string framed(type);
  framed += ' ';
  framed += std::to_string(body.size());
  framed += '\0';
  framed += body;
  return sha1_raw(framed);
}

std::string tree_raw(const fs::path& dir) {
  struct Entry {
    std::string sort_key, mode, name, id;
  };
  std::vector<Entry> entries;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (e.is_directory()) {
      entries.push_back({name + "/", "40000", name, tree_raw(e.path())});
    } else if (e.is_regular_file()) {
      entries.push_back({name, "100644", name, object_raw("blob", read_all(e.path()))});
    }
  }
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) { return a.sort_key < b.sort_key; });
  std::string body;
  for (const Entry& e : entries) {
    body += e.mode + ' ' + e.name;
    body += '\0';
    body += e.id;
  }
  return object_raw("tree", body);
}

}  // namespace

std::string sha1_hex(std::string_view bytes) { return to_hex(sha1_raw(bytes)); }

std::string git_blob_id(std::string_view content) { return to_hex(object_raw("blob", content)); }

std::string git_path_id(const fs::path& path) {
  if (fs::is_directory(path)) return to_hex(tree_raw(path));
  if (fs::is_regular_file(path)) return git_blob_id(read_all(path));
  throw DataError("input '" + path.string() + "' does not exist");
}

std::string config_hash(const nlohmann::json& config) { return sha1_hex(config.dump()); }

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void to_json(nlohmann::json& j, const RunManifest& m) {
  j = {{"command", m.command},         {"argv", m.argv},       {"config", m.config},
       {"seed", m.seed},               {"config_hash", m.config_hash}, {"inputs", m.inputs},
       {"started_at", m.started_at},   {"finished_at", m.finished_at}, {"status", m.status}};
}

void from_json(const nlohmann::json& j, RunManifest& m) {
  m.command = j.at("command").get<std::string>();
  m.argv = j.value("argv", std::vector<std::string>{});
  m.config = j.at("config");
  m.seed = j.value("seed", std::uint64_t{0});
  m.config_hash = j.value("config_hash", "");
  m.inputs = j.value("inputs", std::map<std::string, std::string>{});
  m.started_at = j.value("started_at", "");
  m.finished_at = j.value("finished_at", "");
  m.status = j.value("status", "");
}

void write_manifest(const RunManifest& m, const fs::path& dir) {
  fs::create_directories(dir);
  const fs::path tmp = dir / (std::string(kRunManifestFile) + ".tmp");
  {
    std::ofstream out(tmp);
    if (!out) throw DataError("cannot write manifest in '" + dir.string() + "'");
    out << nlohmann::json(m).dump(2) << '\n';
  }
  fs::rename(tmp, dir / kRunManifestFile);
}

RunManifest read_manifest(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw DataError("cannot read manifest '" + file.string() + "'");
  try {
    return nlohmann::json::parse(in).get<RunManifest>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed manifest '" + file.string() + "': " + e.what());
  }
}

}  // namespace mrf::cli
