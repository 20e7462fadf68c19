#include "mrf/moe/layer.hpp"

#include "mrf/error.hpp"
#include "mrf/numeric/ops.hpp"

namespace mrf::moe {

Tensor expert_forward(const Tensor& x, const Expert& expert) {
  return linear(gelu(linear(x, expert.w1)), expert.w2);
}

Tensor moe_forward(const Tensor& x, const RoutingTrace& trace, std::span<const Expert> experts) {
  if (x.rank() != 2 || x.rows() != trace.tokens()) throw ShapeError("moe_forward: input rows differ from trace tokens");
  if (trace.top_k == 0) throw ShapeError("moe_forward: routing selected no experts");
  const std::size_t tokens = trace.tokens();
  std::vector<std::vector<std::size_t>> assigned(experts.size());
  for (std::size_t t = 0; t < tokens; ++t) {
    for (std::size_t e : trace.selected_for(t)) {
      if (e >= experts.size()) {
        throw ShapeError("expert index " + std::to_string(e) + " out of range for " +
                         std::to_string(experts.size()) + " experts");
      }
      assigned[e].push_back(t);
    }
  }
  std::vector<Tensor> parts;
  for (std::size_t e = 0; e < experts.size(); ++e) {
    const auto& rows = assigned[e];
    if (rows.empty()) continue;
    const std::vector<std::size_t> cols(rows.size(), e);
    const Tensor out = expert_forward(gather_rows(x, rows), experts[e]);
    const Tensor weighted = scale_rows(out, gather_elements(trace.gates, rows, cols));
    parts.push_back(scatter_rows(weighted, rows, tokens));
  }
  return parts.size() == 1 ? parts.front() : add_n(parts);
}

LayerOutput moe_layer(const Tensor& x, const LayerParams& params, const MoEConfig& cfg,
                      std::vector<std::uint8_t> valid) {
  if (params.experts.size() != cfg.n_experts) throw ShapeError("layer holds the wrong number of experts");
  Tensor scores;
  Tensor per_router;
  if (cfg.router_mode == RouterMode::mixture) {
    MixtureScores s = score_mixture(x, params.router_mats, params.expert_keys, cfg);
    scores = s.expert;
    per_router = s.per_router;
  } else {
    if (params.baseline.kind != cfg.router_mode) throw ConfigError("router kind does not match the checkpoint's mode");
    scores = score_baseline(x, params.baseline);
  }
  LayerOutput out;
  out.trace = route(scores, cfg.effective_top_k(), std::move(valid));
  out.trace.router_scores = per_router;
  out.y = moe_forward(x, out.trace, params.experts);
  out.aux_loss = aux_loss(out.trace, cfg.aux_coeff);
  out.z_loss = z_loss(out.trace, cfg.z_coeff);
  return out;
}

}  // namespace mrf::moe
