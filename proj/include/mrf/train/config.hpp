#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

namespace mrf::train {

struct TrainConfig {
  double max_lr = 5e-4;
  double warmup_frac = 0.01;
  std::vector<double> decay_points{0.8, 0.9};
  double decay_factor = 0.316;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.95;
  double adam_eps = 1e-8;
  double clip_norm = 1.0;
  double weight_decay = 0.1;
  std::size_t total_steps = 2000;
  std::size_t batch_tokens = 8192;
  std::size_t seq = 256;
  std::uint64_t seed = 0;
  std::size_t eval_batches = 4;  // validation batches per domain at the end of training
  std::size_t log_every = 1;

  // Throws ConfigError.
  void validate() const;
  std::size_t sequences_per_batch() const { return batch_tokens / seq; }

  bool operator==(const TrainConfig&) const = default;
};

// Linear warmup from 0 to max_lr, constant, then multiplied by decay_factor
// at each decay point. `step` counts completed updates, 0..total_steps.
double lr_at(std::size_t step, const TrainConfig& cfg);

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

}  // namespace mrf::train
