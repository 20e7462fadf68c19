#include "mrf/train/config.hpp"

#include "mrf/error.hpp"

namespace mrf::train {

void TrainConfig::validate() const {
  if (!(max_lr > 0.0)) throw ConfigError("max_lr must be positive");
  if (decay_points.empty()) throw ConfigError("at least one decay point is required");
  for (std::size_t i = 0; i < decay_points.size(); ++i) {
    if (!(decay_points[i] > 0.0 && decay_points[i] < 1.0)) throw ConfigError("decay points must lie in (0, 1)");
    if (i > 0 && !(decay_points[i] > decay_points[i - 1])) throw ConfigError("decay points must be strictly increasing");
  }
  if (!(warmup_frac > 0.0 && warmup_frac < decay_points.front())) {
    throw ConfigError("warmup_frac must lie in (0, first decay point)");
  }
  if (!(decay_factor > 0.0)) throw ConfigError("decay_factor must be positive");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be positive");
  if (!(clip_norm > 0.0)) throw ConfigError("clip_norm must be positive");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be non-negative");
  if (total_steps == 0) throw ConfigError("total_steps must be positive");
  if (seq == 0 || batch_tokens < seq) throw ConfigError("batch_tokens must hold at least one sequence");
  if (batch_tokens % seq != 0) throw ConfigError("batch_tokens must be a multiple of seq");
  if (log_every == 0) throw ConfigError("log_every must be positive");
}

double lr_at(std::size_t step, const TrainConfig& cfg) {
  if (step > cfg.total_steps) {
    throw ConfigError("step " + std::to_string(step) + " is outside [0, " + std::to_string(cfg.total_steps) + "]");
  }
  const double s = static_cast<double>(step);
  const double total = static_cast<double>(cfg.total_steps);
  const double warmup = cfg.warmup_frac * total;
  if (s < warmup) return cfg.max_lr * s / warmup;
  double lr = cfg.max_lr;
  for (double point : cfg.decay_points) {
    if (s >= point * total) lr *= cfg.decay_factor;
  }
  return lr;
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"max_lr", c.max_lr},           {"warmup_frac", c.warmup_frac}, {"decay_points", c.decay_points},
       {"decay_factor", c.decay_factor}, {"adam_beta1", c.adam_beta1},   {"adam_beta2", c.adam_beta2},
       {"adam_eps", c.adam_eps},         {"clip_norm", c.clip_norm},     {"weight_decay", c.weight_decay},
       {"total_steps", c.total_steps},   {"batch_tokens", c.batch_tokens}, {"seq", c.seq},
       {"seed", c.seed},                 {"eval_batches", c.eval_batches}, {"log_every", c.log_every}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig d;
  c.max_lr = j.value("max_lr", d.max_lr);
  c.warmup_frac = j.value("warmup_frac", d.warmup_frac);
  c.decay_points = j.value("decay_points", d.decay_points);
  c.decay_factor = j.value("decay_factor", d.decay_factor);
  c.adam_beta1 = j.value("adam_beta1", d.adam_beta1);
  c.adam_beta2 = j.value("adam_beta2", d.adam_beta2);
  c.adam_eps = j.value("adam_eps", d.adam_eps);
  c.clip_norm = j.value("clip_norm", d.clip_norm);
  c.weight_decay = j.value("weight_decay", d.weight_decay);
  c.total_steps = j.value("total_steps", d.total_steps);
  c.batch_tokens = j.value("batch_tokens", d.batch_tokens);
  c.seq = j.value("seq", d.seq);
  c.seed = j.value("seed", d.seed);
  c.eval_batches = j.value("eval_batches", d.eval_batches);
  c.log_every = j.value("log_every", d.log_every);
}

}  // namespace mrf::train
