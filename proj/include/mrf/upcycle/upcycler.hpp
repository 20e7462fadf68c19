#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "mrf/model/checkpoint.hpp"
#include "mrf/model/config.hpp"
#include "mrf/model/transformer.hpp"
#include "mrf/moe/config.hpp"
#include "mrf/numeric/tensor.hpp"

namespace mrf::upcycle {

// Per-head statistics of one attention layer.
struct HeadStat {
  Tensor wq;     // [head_dim, d] rows of the query projection owned by the head
  Tensor k_avg;  // [head_dim] mean key vector over the collection pass
};

struct HeadStats {
  model::ModelConfig config;
  std::vector<std::vector<HeadStat>> layers;  // [layer][head]
  std::size_t tokens = 0;                     // non-PAD positions averaged

  void validate() const;
};

// Pulls the next batch; nullopt once the source is exhausted.
using BatchSource = std::function<std::optional<model::TokenBatch>()>;

// Runs `iters` batches through a frozen dense model and averages every
// head's key vectors over all non-PAD positions.
HeadStats collect_key_stats(const model::Checkpoint& dense, const BatchSource& next, std::size_t iters);

void save_head_stats(const HeadStats& stats, const std::filesystem::path& dir);
HeadStats load_head_stats(const std::filesystem::path& dir);

struct Pair {
  std::size_t first;
  std::size_t second;
  double similarity;
};

// Repeatedly takes the unmatched pair of highest cosine similarity (ties to
// the lowest (i, j)) until every item is used. Output is in selection order.
std::vector<Pair> greedy_pair(std::span<const std::vector<double>> items);

struct LayerBank {
  std::vector<Tensor> router_mats;  // m x [d', d]
  std::vector<Tensor> expert_keys;  // n * keys_per_expert x [d'], expert-major
};

struct RouterBank {
  moe::MoEConfig config;  // resolved
  std::vector<LayerBank> layers;
};

// Builds routers and expert keys from head statistics. `cfg` is resolved
// against the statistics' architecture first.
RouterBank build_router_bank(const HeadStats& stats, moe::MoEConfig cfg);

// Throws StateError unless every router row is a verbatim head query row and
// every key is a verbatim concatenation of head key segments.
void verify_provenance(const RouterBank& bank, const HeadStats& stats);

struct UpcycleOptions {
  std::uint64_t seed = 0;
  double router_init_std = 0.02;  // baseline routers; 0 gives all-zero weights
};

// Dense -> MoE: every expert is a copy of the layer's FFN, everything else
// is carried over unchanged. Mixture mode installs the bank; the baseline
// modes draw fresh router weights.
model::Checkpoint upcycle(const model::Checkpoint& dense, const moe::MoEConfig& cfg, const RouterBank* bank,
                          const UpcycleOptions& options = {});

}  // namespace mrf::upcycle
