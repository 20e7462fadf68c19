#pragma once

#include <cstddef>
#include <json.hpp>

namespace mrf::model {

// Architecture of the dense decoder (and of the non-FFN parts of an MoE
// model derived from it).
struct ModelConfig {
  std::size_t d_model = 128;
  std::size_t n_heads = 16;
  std::size_t head_dim = 8;
  std::size_t n_layers = 2;
  std::size_t ffn_hidden = 256;
  std::size_t vocab_size = 259;
  std::size_t seq_len = 256;

  // d_model == n_heads * head_dim and n_heads a power of two; throws ConfigError.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

bool is_power_of_two(std::size_t v);

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

}  // namespace mrf::model
