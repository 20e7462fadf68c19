#include "mrf/moe/routing.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mrf/error.hpp"
#include "mrf/numeric/ops.hpp"

namespace mrf::moe {

namespace {

Tensor as_rows(const Tensor& x) {
  if (x.rank() == 1) return reshape(x, {1, x.size()});
  if (x.rank() != 2) throw ShapeError("router input must be [d] or [T, d]");
  return x;
}

void check_bank(std::span<const Tensor> router_mats, std::span<const Tensor> expert_keys,
                const MoEConfig& cfg, std::size_t d) {
  if (router_mats.size() != cfg.n_routers) {
    throw ShapeError("expected " + std::to_string(cfg.n_routers) + " router matrices, got " +
                     std::to_string(router_mats.size()));
  }
  if (expert_keys.size() != cfg.total_keys()) {
    throw ShapeError("expected " + std::to_string(cfg.total_keys()) + " expert keys, got " +
                     std::to_string(expert_keys.size()));
  }
  for (const Tensor& w : router_mats) {
    if (w.shape() != Shape{cfg.router_dim, d}) {
      throw ShapeError("router matrix " + shape_to_string(w.shape()) + " does not match [d'=" +
                       std::to_string(cfg.router_dim) + ", d=" + std::to_string(d) + "]");
    }
  }
  for (const Tensor& k : expert_keys) {
    if (k.size() != cfg.router_dim) throw ShapeError("expert key length differs from router_dim");
  }
}

Tensor key_matrix(std::span<const Tensor> expert_keys) { return concat_rows(expert_keys); }

}  // namespace

MixtureScores score_mixture(const Tensor& x, std::span<const Tensor> router_mats,
                            std::span<const Tensor> expert_keys, const MoEConfig& cfg) {
  const Tensor xs = as_rows(x);
  check_bank(router_mats, expert_keys, cfg, xs.cols());
  const std::size_t tokens = xs.rows();
  const std::size_t m = cfg.n_routers, dim = cfg.router_dim, keys = cfg.total_keys();

  // All m queries at once: [T, m*d'] is row-major, so it reshapes to one
  // d'-vector per (token, router).
  const Tensor queries = reshape(linear(xs, concat_rows(router_mats)), {tokens * m, dim});
  const Tensor raw = scale(linear(queries, key_matrix(expert_keys)), 1.0 / std::sqrt(static_cast<double>(dim)));
  MixtureScores out;
  out.per_router = reshape(raw, {tokens, m * keys});
  const Reduce mode = cfg.mixture == MixtureMode::summation ? Reduce::sum : Reduce::max;
  Tensor per_key = reduce_strided(out.per_router, m, mode);
  out.expert = cfg.keys_per_expert > 1 ? reduce_blocks(per_key, cfg.keys_per_expert, Reduce::max) : per_key;
  return out;
}

Tensor score_collapsed(const Tensor& x, std::span<const Tensor> router_mats,
                       std::span<const Tensor> expert_keys, const MoEConfig& cfg) {
  if (cfg.mixture != MixtureMode::summation) {
    throw ConfigError("the collapsed projection only holds for the summation mixture");
  }
  const Tensor xs = as_rows(x);
  check_bank(router_mats, expert_keys, cfg, xs.cols());
  const Tensor projection = add_n(router_mats);
  const Tensor q = linear(xs, projection);
  Tensor per_key = scale(linear(q, key_matrix(expert_keys)), 1.0 / std::sqrt(static_cast<double>(cfg.router_dim)));
  return cfg.keys_per_expert > 1 ? reduce_blocks(per_key, cfg.keys_per_expert, Reduce::max) : per_key;
}

Tensor score_baseline(const Tensor& x, const BaselineRouter& router) {
  const Tensor xs = as_rows(x);
  switch (router.kind) {
    case RouterMode::vanilla:
    case RouterMode::switch_top1:
      return linear(xs, router.w1);
    case RouterMode::mlp:
      return linear(gelu(linear(xs, router.w1)), router.w2);
    case RouterMode::mixture:
      break;
  }
  throw ConfigError("score_baseline called with the mixture router kind");
}

std::vector<std::size_t> top_k_indices(std::span<const double> gates, std::size_t k) {
  if (k == 0 || k > gates.size()) throw ConfigError("top-k needs 1 <= k <= n");
  std::vector<std::size_t> order(gates.size());
  std::iota(order.begin(), order.end(), 0);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) { return gates[a] > gates[b] || (gates[a] == gates[b] && a < b); });
  order.resize(k);
  return order;
}

RoutingTrace route(const Tensor& scores, std::size_t k, std::vector<std::uint8_t> valid) {
  if (scores.rank() != 2) throw ShapeError("route expects scores of shape [T, n]");
  RoutingTrace trace;
  trace.scores = scores;
  trace.gates = softmax(scores);
  trace.top_k = k;
  trace.valid = std::move(valid);
  const std::size_t tokens = scores.rows(), n = scores.cols();
  if (!trace.valid.empty() && trace.valid.size() != tokens) throw ShapeError("validity mask length differs from T");

  trace.selected.reserve(tokens * k);
  trace.dispatch_fraction.assign(n, 0.0);
  trace.mean_gate.assign(n, 0.0);
  std::size_t counted = 0;
  const auto gates = trace.gates.data();
  for (std::size_t t = 0; t < tokens; ++t) {
    const auto row = gates.subspan(t * n, n);
    for (std::size_t e : top_k_indices(row, k)) {
      trace.selected.push_back(e);
      if (trace.is_valid(t)) trace.dispatch_fraction[e] += 1.0;
    }
    if (!trace.is_valid(t)) continue;
    ++counted;
    for (std::size_t e = 0; e < n; ++e) trace.mean_gate[e] += row[e];
  }
  if (counted == 0) throw DataError("routing statistics over an empty batch");
  for (std::size_t e = 0; e < n; ++e) {
    trace.dispatch_fraction[e] /= static_cast<double>(counted);
    trace.mean_gate[e] /= static_cast<double>(counted);
  }
  return trace;
}

namespace {
std::vector<std::size_t> valid_rows(const RoutingTrace& trace) {
  std::vector<std::size_t> rows;
  for (std::size_t t = 0; t < trace.tokens(); ++t) {
    if (trace.is_valid(t)) rows.push_back(t);
  }
  if (rows.empty()) throw DataError("loss over an empty batch");
  return rows;
}

Tensor valid_part(const Tensor& x, const RoutingTrace& trace) {
  if (trace.valid.empty()) return x;
  return gather_rows(x, valid_rows(trace));
}
}  // namespace

Tensor aux_loss(const RoutingTrace& trace, double coeff) {
  const std::size_t n = trace.n_experts();
  const Tensor mean_gate = mean_rows(valid_part(trace.gates, trace));
  std::vector<double> weights(n);
  for (std::size_t e = 0; e < n; ++e) {
    weights[e] = coeff * static_cast<double>(n) * trace.dispatch_fraction[e] / static_cast<double>(trace.top_k);
  }
  return sum(mul(mean_gate, Tensor::from({n}, std::move(weights))));
}

Tensor z_loss(const RoutingTrace& trace, double coeff) {
  return scale(mean(square(logsumexp(valid_part(trace.scores, trace)))), coeff);
}

}  // namespace mrf::moe
