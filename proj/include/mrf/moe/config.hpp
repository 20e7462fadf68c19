#pragma once

#include <cstddef>
#include <json.hpp>
#include <string>
#include <string_view>

#include "mrf/model/config.hpp"

namespace mrf::moe {

// How the per-layer router is parameterized.
//   mixture  - attention-initialized mixture of routers scoring expert keys
//   vanilla  - linear router, softmax, top-k
//   switch_top1 - linear router with top-1 selection
//   mlp      - two-layer GELU MLP router
enum class RouterMode { mixture, vanilla, switch_top1, mlp };

// How per-router scores are combined into one score per expert.
enum class MixtureMode { summation, max_pooling };

std::string to_string(RouterMode mode);
std::string to_string(MixtureMode mode);
RouterMode parse_router_mode(std::string_view text);
MixtureMode parse_mixture_mode(std::string_view text);

struct MoEConfig {
  std::size_t n_experts = 8;
  std::size_t top_k = 2;
  std::size_t n_routers = 8;
  std::size_t router_dim = 0;       // derived by resolve()
  std::size_t keys_per_expert = 1;  // derived by resolve()
  MixtureMode mixture = MixtureMode::summation;
  RouterMode router_mode = RouterMode::mixture;
  double aux_coeff = 0.02;
  double z_coeff = 0.001;
  bool split_heads = false;
  bool train_keys = true;

  // Checks the (h, m, n, k) combination against the dense architecture and
  // fills router_dim / keys_per_expert:
  //   m <= n        d' = (h/m) * head_dim, one key per expert
  //   m == h > n    d' = head_dim, m/n keys per expert
  //   split, m == 2h  d' = head_dim/2, m/n keys per expert
  // Throws ConfigError for any other combination.
  void resolve(const model::ModelConfig& dense);

  std::size_t effective_top_k() const { return router_mode == RouterMode::switch_top1 ? 1 : top_k; }
  std::size_t total_keys() const { return n_experts * keys_per_expert; }

  bool operator==(const MoEConfig&) const = default;
};

// Concatenation rounds used to build routers: log2(h / m) for m <= n, else 0.
std::size_t concat_rounds(const model::ModelConfig& dense, const MoEConfig& cfg);

// Router projection parameters per layer for the configured mode. Expert
// keys are counted with the experts, not here.
std::size_t router_param_count(const model::ModelConfig& dense, const MoEConfig& cfg);

void to_json(nlohmann::json& j, const MoEConfig& c);
void from_json(const nlohmann::json& j, MoEConfig& c);

}  // namespace mrf::moe
