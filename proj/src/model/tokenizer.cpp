#include "mrf/model/tokenizer.hpp"

namespace mrf::model {

std::vector<std::int32_t> encode_bytes(std::string_view text) {
  std::vector<std::int32_t> ids;
  ids.reserve(text.size());
  for (char c : text) ids.push_back(static_cast<std::int32_t>(static_cast<unsigned char>(c)));
  return ids;
}

std::vector<std::int32_t> encode_document(std::string_view text) {
  std::vector<std::int32_t> ids;
  ids.reserve(text.size() + 2);
  ids.push_back(kBos);
  for (char c : text) ids.push_back(static_cast<std::int32_t>(static_cast<unsigned char>(c)));
  ids.push_back(kEos);
  return ids;
}

}  // namespace mrf::model
