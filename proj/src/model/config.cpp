#include "mrf/model/config.hpp"

#include <string>

#include "mrf/error.hpp"

namespace mrf::model {

bool is_power_of_two(std::size_t v) { return v != 0 && (v & (v - 1)) == 0; }

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ConfigError(std::string(name) + " must be positive");
  };
  positive(d_model, "d_model");
  positive(n_heads, "n_heads");
  positive(head_dim, "head_dim");
  positive(n_layers, "n_layers");
  positive(ffn_hidden, "ffn_hidden");
  positive(vocab_size, "vocab_size");
  positive(seq_len, "seq_len");
  if (d_model != n_heads * head_dim) {
    throw ConfigError("d_model (" + std::to_string(d_model) + ") must equal n_heads * head_dim (" +
                      std::to_string(n_heads * head_dim) + ")");
  }
  if (!is_power_of_two(n_heads)) throw ConfigError("n_heads must be a power of two");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"d_model", c.d_model},   {"n_heads", c.n_heads},
                     {"head_dim", c.head_dim}, {"n_layers", c.n_layers},
                     {"ffn_hidden", c.ffn_hidden}, {"vocab_size", c.vocab_size},
                     {"seq_len", c.seq_len}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  j.at("d_model").get_to(c.d_model);
  j.at("n_heads").get_to(c.n_heads);
  j.at("head_dim").get_to(c.head_dim);
  j.at("n_layers").get_to(c.n_layers);
  j.at("ffn_hidden").get_to(c.ffn_hidden);
  j.at("vocab_size").get_to(c.vocab_size);
  j.at("seq_len").get_to(c.seq_len);
}

}  // namespace mrf::model
