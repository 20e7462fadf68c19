#include "mrf/upcycle/upcycler.hpp"

#include <bit>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <unordered_set>

#include "mrf/error.hpp"
#include "mrf/model/archive.hpp"
#include "mrf/model/tokenizer.hpp"
#include "mrf/numeric/ops.hpp"
#include "mrf/numeric/rng.hpp"
#include "mrf/numeric/tape.hpp"

namespace mrf::upcycle {

using model::Checkpoint;
using model::ModelConfig;

void HeadStats::validate() const {
  config.validate();
  if (layers.size() != config.n_layers) throw ShapeError("head statistics cover the wrong number of layers");
  if (tokens == 0) throw DataError("head statistics were collected over zero tokens");
  for (const auto& layer : layers) {
    if (layer.size() != config.n_heads) throw ShapeError("head statistics need one entry per head");
    for (const HeadStat& head : layer) {
      if (head.wq.shape() != Shape{config.head_dim, config.d_model} || head.k_avg.shape() != Shape{config.head_dim}) {
        throw ShapeError("head statistic has the wrong shape");
      }
      for (double v : head.k_avg.data()) {
        if (!std::isfinite(v)) throw NumericError("non-finite average key");
      }
    }
  }
}

namespace {

// Rows [head*hd, (head+1)*hd) of a [h*hd, d] projection.
Tensor head_rows(const Tensor& w, std::size_t head, std::size_t hd) {
  const std::size_t d = w.cols();
  const auto src = w.data().subspan(head * hd * d, hd * d);
  return Tensor::from({hd, d}, std::vector<double>(src.begin(), src.end()));
}

}  // namespace

HeadStats collect_key_stats(const Checkpoint& dense, const BatchSource& next, std::size_t iters) {
  if (!dense.frozen()) throw StateError("key statistics must be collected from a frozen checkpoint");
  if (dense.is_moe()) throw ConfigError("key statistics need a dense checkpoint");
  if (iters == 0) throw ConfigError("iters must be at least 1");
  const ModelConfig& cfg = dense.config();
  const std::size_t width = cfg.n_heads * cfg.head_dim;

  std::vector<std::vector<double>> sums(cfg.n_layers, std::vector<double>(width, 0.0));
  std::size_t tokens = 0;
  NoGradGuard no_grad;
  for (std::size_t it = 0; it < iters; ++it) {
    std::optional<model::TokenBatch> batch = next();
    if (!batch) {
      throw DataError("corpus exhausted after " + std::to_string(it) + " of " + std::to_string(iters) + " batches");
    }
    const model::ForwardResult fwd = model::forward(dense, *batch);
    for (std::size_t row = 0; row < batch->inputs.size(); ++row) {
      if (batch->inputs[row] == model::kPad) continue;
      if (cfg.n_layers > 0) ++tokens;
      for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        const auto keys = fwd.layers[l].keys.data().subspan(row * width, width);
        for (std::size_t c = 0; c < width; ++c) sums[l][c] += keys[c];
      }
    }
  }
  if (tokens == 0) throw DataError("key collection saw no non-PAD tokens");

  HeadStats stats;
  stats.config = cfg;
  stats.tokens = tokens;
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    const Tensor& wq = dense.tensor(model::layer_prefix(l) + "attn.wq");
    std::vector<HeadStat> heads;
    for (std::size_t h = 0; h < cfg.n_heads; ++h) {
      std::vector<double> avg(cfg.head_dim);
      for (std::size_t c = 0; c < cfg.head_dim; ++c) {
        avg[c] = sums[l][h * cfg.head_dim + c] / static_cast<double>(tokens);
      }
      heads.push_back({head_rows(wq, h, cfg.head_dim), Tensor::from({cfg.head_dim}, std::move(avg))});
    }
    stats.layers.push_back(std::move(heads));
  }
  stats.validate();
  return stats;
}

namespace {
std::string stat_name(std::size_t layer, std::size_t head, const char* field) {
  return model::layer_prefix(layer) + "head." + std::to_string(head) + "." + field;
}
}  // namespace

void save_head_stats(const HeadStats& stats, const std::filesystem::path& dir) {
  stats.validate();
  nlohmann::json meta;
  meta["kind"] = "head_stats";
  meta["model_config"] = stats.config;
  meta["tokens"] = stats.tokens;
  std::vector<model::NamedTensor> tensors;
  for (std::size_t l = 0; l < stats.layers.size(); ++l) {
    for (std::size_t h = 0; h < stats.layers[l].size(); ++h) {
      tensors.push_back({stat_name(l, h, "wq"), stats.layers[l][h].wq});
      tensors.push_back({stat_name(l, h, "k_avg"), stats.layers[l][h].k_avg});
    }
  }
  model::write_archive(dir, std::move(meta), tensors);
}

HeadStats load_head_stats(const std::filesystem::path& dir) {
  model::Archive archive = model::read_archive(dir);
  if (archive.meta.value("kind", "") != "head_stats") throw FormatError("archive does not hold head statistics");
  HeadStats stats;
  try {
    stats.config = archive.meta.at("model_config").get<ModelConfig>();
    stats.tokens = archive.meta.at("tokens").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed head statistics manifest: " + std::string(e.what()));
  }
  std::map<std::string, Tensor> by_name;
  for (auto& [name, t] : archive.tensors) by_name.emplace(name, std::move(t));
  for (std::size_t l = 0; l < stats.config.n_layers; ++l) {
    std::vector<HeadStat> heads;
    for (std::size_t h = 0; h < stats.config.n_heads; ++h) {
      auto wq = by_name.find(stat_name(l, h, "wq"));
      auto k = by_name.find(stat_name(l, h, "k_avg"));
      if (wq == by_name.end() || k == by_name.end()) throw FormatError("head statistics archive is incomplete");
      heads.push_back({wq->second, k->second});
    }
    stats.layers.push_back(std::move(heads));
  }
  stats.validate();
  return stats;
}

std::vector<Pair> greedy_pair(std::span<const std::vector<double>> items) {
  const std::size_t count = items.size();
  if (count == 0 || count % 2 != 0) throw ConfigError("greedy pairing needs a positive even number of items");
  for (const auto& v : items) {
    if (v.size() != items[0].size()) throw ShapeError("greedy pairing items differ in length");
    if (l2_norm(v) == 0.0) throw NumericError("greedy pairing cannot use a zero vector");
  }
  std::vector<double> sim(count * count, 0.0);
  for (std::size_t i = 0; i < count; ++i)
    for (std::size_t j = i + 1; j < count; ++j) sim[i * count + j] = cosine_similarity(items[i], items[j]);

  std::vector<bool> used(count, false);
  std::vector<Pair> pairs;
  while (pairs.size() < count / 2) {
    Pair best{0, 0, -std::numeric_limits<double>::infinity()};
    for (std::size_t i = 0; i < count; ++i) {
      if (used[i]) continue;
      for (std::size_t j = i + 1; j < count; ++j) {
        if (used[j]) continue;
        // Strict > keeps the first (lowest i, then j) of equal candidates.
        if (sim[i * count + j] > best.similarity) best = {i, j, sim[i * count + j]};
      }
    }
    used[best.first] = used[best.second] = true;
    pairs.push_back(best);
  }
  return pairs;
}

namespace {

// A group of heads being merged: stacked query rows and concatenated keys.
struct Group {
  std::vector<double> rows;  // row-major [r, d]; unused for key-only pools
  std::vector<double> key;
};

template <typename T>
std::vector<T> joined(const std::vector<T>& a, const std::vector<T>& b) {
  std::vector<T> out(a);
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

std::vector<Group> pair_rounds(std::vector<Group> groups, std::size_t rounds) {
  for (std::size_t r = 0; r < rounds; ++r) {
    std::vector<std::vector<double>> keys;
    for (const Group& g : groups) keys.push_back(g.key);
    std::vector<Group> merged;
    for (const Pair& p : greedy_pair(keys)) {
      merged.push_back({joined(groups[p.first].rows, groups[p.second].rows),
                        joined(groups[p.first].key, groups[p.second].key)});
    }
    groups = std::move(merged);
  }
  return groups;
}

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

std::vector<double> slice(const std::vector<double>& v, std::size_t begin, std::size_t len) {
  return {v.begin() + static_cast<std::ptrdiff_t>(begin), v.begin() + static_cast<std::ptrdiff_t>(begin + len)};
}

LayerBank build_layer(const std::vector<HeadStat>& heads, const ModelConfig& dense, const moe::MoEConfig& cfg) {
  const std::size_t hd = dense.head_dim, d = dense.d_model;
  const std::size_t m = cfg.n_routers, n = cfg.n_experts, dim = cfg.router_dim;

  std::vector<Group> heads_as_groups;
  for (const HeadStat& s : heads) heads_as_groups.push_back({values(s.wq), values(s.k_avg)});

  std::vector<Group> routers;
  std::vector<std::vector<double>> keys;
  if (cfg.split_heads) {
    const std::size_t half = hd / 2;
    for (const Group& g : heads_as_groups) {
      for (std::size_t part = 0; part < 2; ++part) {
        routers.push_back({slice(g.rows, part * half * d, half * d), {}});
        keys.push_back(slice(g.key, part * half, half));
      }
    }
  } else if (m <= n) {
    const std::size_t rounds = moe::concat_rounds(dense, cfg);
    routers = pair_rounds(heads_as_groups, rounds);
    if (m == n) {
      for (const Group& g : routers) keys.push_back(g.key);
    } else {
      // Key pool: every head's average key, duplicated n/m times.
      std::vector<Group> pool;
      for (std::size_t copy = 0; copy < n / m; ++copy)
        for (const Group& g : heads_as_groups) pool.push_back({{}, g.key});
      for (const Group& g : pair_rounds(std::move(pool), rounds)) keys.push_back(g.key);
    }
  } else {
    routers = heads_as_groups;
    for (const Group& g : heads_as_groups) keys.push_back(g.key);
  }

  LayerBank bank;
  for (Group& g : routers) bank.router_mats.push_back(Tensor::from({dim, d}, std::move(g.rows)));
  for (auto& k : keys) bank.expert_keys.push_back(Tensor::from({dim}, std::move(k)));
  if (bank.router_mats.size() != m || bank.expert_keys.size() != cfg.total_keys()) {
    throw StateError("router bank construction produced the wrong number of routers or keys");
  }
  return bank;
}

std::string bytes_of(std::span<const double> v) {
  return std::string(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double));
}

}  // namespace

RouterBank build_router_bank(const HeadStats& stats, moe::MoEConfig cfg) {
  stats.validate();
  cfg.router_mode = moe::RouterMode::mixture;
  cfg.resolve(stats.config);
  RouterBank bank;
  bank.config = cfg;
  for (const auto& heads : stats.layers) bank.layers.push_back(build_layer(heads, stats.config, cfg));
  verify_provenance(bank, stats);
  return bank;
}

void verify_provenance(const RouterBank& bank, const HeadStats& stats) {
  const ModelConfig& dense = stats.config;
  const std::size_t d = dense.d_model;
  const std::size_t segment = bank.config.split_heads ? dense.head_dim / 2 : dense.head_dim;
  if (bank.layers.size() != stats.layers.size()) throw StateError("router bank and statistics differ in depth");
  for (std::size_t l = 0; l < bank.layers.size(); ++l) {
    std::unordered_set<std::string> rows, segments;
    for (const HeadStat& s : stats.layers[l]) {
      for (std::size_t r = 0; r < dense.head_dim; ++r) rows.insert(bytes_of(s.wq.data().subspan(r * d, d)));
      for (std::size_t c = 0; c < dense.head_dim; c += segment) segments.insert(bytes_of(s.k_avg.data().subspan(c, segment)));
    }
    for (const Tensor& w : bank.layers[l].router_mats) {
      for (std::size_t r = 0; r < w.rows(); ++r) {
        if (!rows.contains(bytes_of(w.data().subspan(r * d, d)))) {
          throw StateError("router row in layer " + std::to_string(l) + " is not a head query row");
        }
      }
    }
    for (const Tensor& k : bank.layers[l].expert_keys) {
      for (std::size_t c = 0; c < k.size(); c += segment) {
        if (!segments.contains(bytes_of(k.data().subspan(c, segment)))) {
          throw StateError("expert key in layer " + std::to_string(l) + " is not built from head keys");
        }
      }
    }
  }
}

Checkpoint upcycle(const Checkpoint& dense, const moe::MoEConfig& cfg_in, const RouterBank* bank,
                   const UpcycleOptions& options) {
  if (dense.is_moe()) throw ConfigError("upcycling needs a dense checkpoint");
  const ModelConfig& mc = dense.config();
  moe::MoEConfig cfg = cfg_in;
  cfg.resolve(mc);

  std::map<std::string, Tensor> fresh;
  Rng rng(options.seed);
  auto draw = [&](Shape shape) {
    return options.router_init_std == 0.0 ? Tensor::zeros(std::move(shape))
                                          : Tensor::randn(std::move(shape), options.router_init_std, rng);
  };
  if (cfg.router_mode == moe::RouterMode::mixture) {
    if (bank == nullptr) throw ConfigError("the mixture router needs a router bank");
    const moe::MoEConfig& b = bank->config;
    if (b.n_experts != cfg.n_experts || b.n_routers != cfg.n_routers || b.router_dim != cfg.router_dim ||
        b.keys_per_expert != cfg.keys_per_expert || b.split_heads != cfg.split_heads) {
      throw ConfigError("router bank was built for a different expert/router configuration");
    }
    if (bank->layers.size() != mc.n_layers) {
      throw ConfigError("router bank has " + std::to_string(bank->layers.size()) + " layers, checkpoint has " +
                        std::to_string(mc.n_layers));
    }
  }
  for (std::size_t l = 0; l < mc.n_layers; ++l) {
    const std::string p = model::layer_prefix(l);
    for (std::size_t e = 0; e < cfg.n_experts; ++e) {
      fresh[model::expert_prefix(l, e) + "w1"] = dense.tensor(p + "ffn.w1").clone();
      fresh[model::expert_prefix(l, e) + "w2"] = dense.tensor(p + "ffn.w2").clone();
    }
    switch (cfg.router_mode) {
      case moe::RouterMode::mixture: {
        const LayerBank& lb = bank->layers[l];
        for (std::size_t j = 0; j < cfg.n_routers; ++j) fresh[model::router_name(l, j)] = lb.router_mats[j].clone();
        for (std::size_t e = 0; e < cfg.n_experts; ++e)
          for (std::size_t c = 0; c < cfg.keys_per_expert; ++c)
            fresh[model::expert_key_name(l, e, c)] = lb.expert_keys[e * cfg.keys_per_expert + c].clone();
        break;
      }
      case moe::RouterMode::vanilla:
      case moe::RouterMode::switch_top1:
        fresh[p + "router.linear.w"] = draw({cfg.n_experts, mc.d_model});
        break;
      case moe::RouterMode::mlp:
        fresh[p + "router.mlp.w1"] = draw({mc.d_model, mc.d_model});
        fresh[p + "router.mlp.w2"] = draw({cfg.n_experts, mc.d_model});
        break;
    }
  }

  Checkpoint out(mc, cfg);
  for (const auto& spec : model::architecture(mc, cfg)) {
    auto it = fresh.find(spec.name);
    out.set(spec.name, it != fresh.end() ? it->second : dense.tensor(spec.name).clone());
  }
  out.validate();
  return out;
}

}  // namespace mrf::upcycle
