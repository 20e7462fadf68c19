#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "mrf/moe/config.hpp"
#include "mrf/numeric/tensor.hpp"

namespace mrf::moe {

// Routing decisions for a batch of T tokens over n experts.
struct RoutingTrace {
  Tensor router_scores;  // [T, m * keys] per-router scores (mixture mode only)
  Tensor scores;         // [T, n] combined expert scores (pre-softmax)
  Tensor gates;          // [T, n] softmax of scores
  std::size_t top_k = 0;
  std::vector<std::size_t> selected;  // [T * k]; per token by descending gate, ties to lower index
  std::vector<std::uint8_t> valid;    // tokens counted in batch statistics; empty means all
  std::vector<double> dispatch_fraction;  // dispatches to each expert / valid tokens; sums to k
  std::vector<double> mean_gate;          // mean gate of each expert over valid tokens

  std::size_t tokens() const { return gates.rows(); }
  std::size_t n_experts() const { return gates.cols(); }
  std::span<const std::size_t> selected_for(std::size_t token) const {
    return std::span<const std::size_t>(selected).subspan(token * top_k, top_k);
  }
  bool is_valid(std::size_t token) const { return valid.empty() || valid[token] != 0; }
};

struct MixtureScores {
  Tensor per_router;  // [T, m * total_keys], router-major: column j*total_keys + key
  Tensor expert;      // [T, n]
};

// Attention-style scoring: Q^j = W^j x, S^j_c = Q^j . K_c / sqrt(d'), combined
// over routers by summation or max pooling, then (for several keys per
// expert) the expert takes the max over its keys. No normalization of Q or K.
// x is [T, d] or a single token [d]. Keys are ordered expert-major.
MixtureScores score_mixture(const Tensor& x, std::span<const Tensor> router_mats,
                            std::span<const Tensor> expert_keys, const MoEConfig& cfg);

// Summation scores through the collapsed projection sum_j W^j. Equal to
// score_mixture(...).expert for MixtureMode::summation.
Tensor score_collapsed(const Tensor& x, std::span<const Tensor> router_mats,
                       std::span<const Tensor> expert_keys, const MoEConfig& cfg);

// Linear (w1 = [n, d]) or two-layer GELU MLP (w1 = [d, d], w2 = [n, d]) logits.
struct BaselineRouter {
  RouterMode kind = RouterMode::vanilla;
  Tensor w1;
  Tensor w2;
};
Tensor score_baseline(const Tensor& x, const BaselineRouter& router);

std::vector<std::size_t> top_k_indices(std::span<const double> gates, std::size_t k);

// Softmax over all n scores, then top-k selection. Gates are not renormalized
// over the selected set.
RoutingTrace route(const Tensor& scores, std::size_t k, std::vector<std::uint8_t> valid = {});

// coeff * n * sum_i (f_i / k) * P_i; differentiable through P.
Tensor aux_loss(const RoutingTrace& trace, double coeff);

// coeff * mean over valid tokens of logsumexp(S)^2.
Tensor z_loss(const RoutingTrace& trace, double coeff);

}  // namespace mrf::moe
