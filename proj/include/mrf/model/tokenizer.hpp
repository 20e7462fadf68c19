#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace mrf::model {

// Byte-level vocabulary: ids 0..255 are raw bytes, followed by three specials.
inline constexpr std::int32_t kBos = 256;
inline constexpr std::int32_t kEos = 257;
inline constexpr std::int32_t kPad = 258;
inline constexpr std::int32_t kByteVocabSize = 259;

std::vector<std::int32_t> encode_bytes(std::string_view text);

// BOS + bytes + EOS
std::vector<std::int32_t> encode_document(std::string_view text);

}  // namespace mrf::model
