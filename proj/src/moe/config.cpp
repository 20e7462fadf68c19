#include "mrf/moe/config.hpp"

#include <bit>

#include "mrf/error.hpp"

namespace mrf::moe {

using model::is_power_of_two;

std::string to_string(RouterMode mode) {
  switch (mode) {
    case RouterMode::mixture: return "mixture";
    case RouterMode::vanilla: return "vanilla";
    case RouterMode::switch_top1: return "switch";
    case RouterMode::mlp: return "mlp";
  }
  return "?";
}

std::string to_string(MixtureMode mode) {
  return mode == MixtureMode::summation ? "summation" : "max_pooling";
}

RouterMode parse_router_mode(std::string_view text) {
  if (text == "mixture") return RouterMode::mixture;
  if (text == "vanilla") return RouterMode::vanilla;
  if (text == "switch") return RouterMode::switch_top1;
  if (text == "mlp") return RouterMode::mlp;
  throw ConfigError("unknown router mode '" + std::string(text) + "'");
}

MixtureMode parse_mixture_mode(std::string_view text) {
  if (text == "summation") return MixtureMode::summation;
  if (text == "max_pooling") return MixtureMode::max_pooling;
  throw ConfigError("unknown mixture mode '" + std::string(text) + "'");
}

void MoEConfig::resolve(const model::ModelConfig& dense) {
  dense.validate();
  if (!is_power_of_two(n_experts)) throw ConfigError("n_experts must be a power of two");
  if (top_k == 0 || top_k > n_experts) throw ConfigError("top_k must be in [1, n_experts]");
  if (router_mode != RouterMode::mixture) {
    router_dim = 0;
    keys_per_expert = 1;
    return;
  }
  const std::size_t h = dense.n_heads;
  const std::size_t m = n_routers;
  if (!is_power_of_two(m)) throw ConfigError("n_routers must be a power of two");
  if (split_heads) {
    if (m != 2 * h) throw ConfigError("split_heads requires n_routers == 2 * n_heads");
    if (dense.head_dim % 2 != 0) throw ConfigError("split_heads requires an even head_dim");
    if (m % n_experts != 0) throw ConfigError("split_heads requires n_experts to divide n_routers");
    router_dim = dense.head_dim / 2;
    keys_per_expert = m / n_experts;
    return;
  }
  if (m <= n_experts) {
    if (m > h || h % m != 0) {
      throw ConfigError("n_routers (" + std::to_string(m) + ") must divide n_heads (" +
                        std::to_string(h) + ")");
    }
    router_dim = (h / m) * dense.head_dim;
    keys_per_expert = 1;
    return;
  }
  if (m != h) {
    throw ConfigError("n_routers > n_experts requires n_routers == n_heads (or split_heads)");
  }
  router_dim = dense.head_dim;
  keys_per_expert = m / n_experts;
}

std::size_t concat_rounds(const model::ModelConfig& dense, const MoEConfig& cfg) {
  if (cfg.router_mode != RouterMode::mixture || cfg.split_heads || cfg.n_routers > cfg.n_experts) return 0;
  return static_cast<std::size_t>(std::countr_zero(dense.n_heads / cfg.n_routers));
}

std::size_t router_param_count(const model::ModelConfig& dense, const MoEConfig& cfg) {
  switch (cfg.router_mode) {
    case RouterMode::mixture:
      return cfg.n_routers * cfg.router_dim * dense.d_model;
    case RouterMode::vanilla:
    case RouterMode::switch_top1:
      return cfg.n_experts * dense.d_model;
    case RouterMode::mlp:
      return dense.d_model * dense.d_model + cfg.n_experts * dense.d_model;
  }
  return 0;
}

void to_json(nlohmann::json& j, const MoEConfig& c) {
  j = nlohmann::json{{"n_experts", c.n_experts},
                     {"top_k", c.top_k},
                     {"n_routers", c.n_routers},
                     {"router_dim", c.router_dim},
                     {"keys_per_expert", c.keys_per_expert},
                     {"mixture", to_string(c.mixture)},
                     {"router_mode", to_string(c.router_mode)},
                     {"aux_coeff", c.aux_coeff},
                     {"z_coeff", c.z_coeff},
                     {"split_heads", c.split_heads},
                     {"train_keys", c.train_keys}};
}

void from_json(const nlohmann::json& j, MoEConfig& c) {
  j.at("n_experts").get_to(c.n_experts);
  j.at("top_k").get_to(c.top_k);
  j.at("n_routers").get_to(c.n_routers);
  j.at("router_dim").get_to(c.router_dim);
  j.at("keys_per_expert").get_to(c.keys_per_expert);
  c.mixture = parse_mixture_mode(j.at("mixture").get<std::string>());
  c.router_mode = parse_router_mode(j.at("router_mode").get<std::string>());
  j.at("aux_coeff").get_to(c.aux_coeff);
  j.at("z_coeff").get_to(c.z_coeff);
  j.at("split_heads").get_to(c.split_heads);
  c.train_keys = j.value("train_keys", true);
}

}  // namespace mrf::moe
