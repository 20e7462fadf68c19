#pragma once

#include <filesystem>
#include <json.hpp>
#include <span>
#include <string>
#include <vector>

#include "mrf/numeric/tensor.hpp"

namespace mrf::model {

// On-disk tensor archive: a directory holding
//   manifest.json  {format_version, kind, ..., tensors: [{name, shape, offset}]}
//   weights.bin    little-endian float64 values concatenated in index order
// Offsets are in bytes from the start of weights.bin.
inline constexpr int kFormatVersion = 1;
inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kWeightsFile = "weights.bin";

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct Archive {
  nlohmann::json meta;  // manifest without the tensor index
  std::vector<NamedTensor> tensors;
};

void write_archive(const std::filesystem::path& dir, nlohmann::json meta,
                   std::span<const NamedTensor> tensors);

// Throws FormatError for an unknown version, inconsistent index or truncated
// blob.
Archive read_archive(const std::filesystem::path& dir);

}  // namespace mrf::model
