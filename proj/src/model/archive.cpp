#include "mrf/model/archive.hpp"

#include <bit>
#include <fstream>

#include "mrf/error.hpp"

namespace mrf::model {

static_assert(std::endian::native == std::endian::little, "weights.bin is written in host order");

namespace fs = std::filesystem;

void write_archive(const fs::path& dir, nlohmann::json meta, std::span<const NamedTensor> tensors) {
  fs::create_directories(dir);
  nlohmann::json index = nlohmann::json::array();
  std::ofstream blob(dir / kWeightsFile, std::ios::binary | std::ios::trunc);
  if (!blob) throw DataError("cannot write " + (dir / kWeightsFile).string());
  std::size_t offset = 0;
  for (const auto& [name, t] : tensors) {
    index.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
    const auto bytes = t.size() * sizeof(double);
    blob.write(reinterpret_cast<const char*>(t.data().data()), static_cast<std::streamsize>(bytes));
    offset += bytes;
  }
  if (!blob) throw DataError("failed writing " + (dir / kWeightsFile).string());
  meta["format_version"] = kFormatVersion;
  meta["tensors"] = std::move(index);
  meta["total_bytes"] = offset;
  std::ofstream manifest(dir / kManifestFile, std::ios::trunc);
  manifest << meta.dump(2) << '\n';
  if (!manifest) throw DataError("failed writing " + (dir / kManifestFile).string());
}

Archive read_archive(const fs::path& dir) {
  std::ifstream manifest(dir / kManifestFile);
  if (!manifest) throw DataError("missing " + (dir / kManifestFile).string());
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(manifest);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed manifest: " + std::string(e.what()));
  }
  const int version = meta.value("format_version", -1);
  if (version != kFormatVersion) {
    throw FormatError("unsupported format version " + std::to_string(version) + " (expected " +
                      std::to_string(kFormatVersion) + ")");
  }
  if (!meta.contains("tensors") || !meta["tensors"].is_array()) throw FormatError("manifest lacks a tensor index");

  std::ifstream blob(dir / kWeightsFile, std::ios::binary | std::ios::ate);
  if (!blob) throw DataError("missing " + (dir / kWeightsFile).string());
  const auto blob_size = static_cast<std::size_t>(blob.tellg());

  Archive out;
  std::size_t expected_offset = 0;
  for (const auto& entry : meta["tensors"]) {
    NamedTensor nt;
    Shape shape;
    std::size_t offset = 0;
    try {
      nt.name = entry.at("name").get<std::string>();
      shape = entry.at("shape").get<Shape>();
      offset = entry.at("offset").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("malformed tensor index entry: " + std::string(e.what()));
    }
    if (offset != expected_offset) throw FormatError("tensor '" + nt.name + "' has an inconsistent offset");
    const std::size_t bytes = shape_numel(shape) * sizeof(double);
    if (offset + bytes > blob_size) throw FormatError("truncated weights blob at tensor '" + nt.name + "'");
    std::vector<double> values(shape_numel(shape));
    blob.seekg(static_cast<std::streamoff>(offset));
    blob.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(bytes));
    if (!blob) throw FormatError("truncated weights blob at tensor '" + nt.name + "'");
    nt.tensor = Tensor::from(std::move(shape), std::move(values));
    out.tensors.push_back(std::move(nt));
    expected_offset = offset + bytes;
  }
  if (expected_offset != blob_size) throw FormatError("weights blob size does not match the manifest");
  meta.erase("tensors");
  out.meta = std::move(meta);
  return out;
}

}  // namespace mrf::model
