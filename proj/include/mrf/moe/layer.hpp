#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mrf/moe/config.hpp"
#include "mrf/moe/routing.hpp"
#include "mrf/numeric/tensor.hpp"

namespace mrf::moe {

// One FFN expert: w2 * gelu(w1 * x), w1 = [hidden, d], w2 = [d, hidden].
struct Expert {
  Tensor w1;
  Tensor w2;
};

Tensor expert_forward(const Tensor& x, const Expert& expert);

// y = sum over selected s of R_s * E_s(x), per token.
Tensor moe_forward(const Tensor& x, const RoutingTrace& trace, std::span<const Expert> experts);

// Parameters of one MoE layer. Mixture mode uses router_mats/expert_keys,
// the baselines use `baseline`.
struct LayerParams {
  std::vector<Tensor> router_mats;
  std::vector<Tensor> expert_keys;
  BaselineRouter baseline;
  std::vector<Expert> experts;
};

struct LayerOutput {
  Tensor y;
  RoutingTrace trace;
  Tensor aux_loss;
  Tensor z_loss;
};

// Scores, routes and combines x [T, d]. `valid` marks tokens counted in the
// balancing statistics and losses (all tokens are still routed).
LayerOutput moe_layer(const Tensor& x, const LayerParams& params, const MoEConfig& cfg,
                      std::vector<std::uint8_t> valid = {});

}  // namespace mrf::moe
