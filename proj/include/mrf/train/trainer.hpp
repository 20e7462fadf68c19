#pragma once

#include <functional>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mrf/model/checkpoint.hpp"
#include "mrf/model/transformer.hpp"
#include "mrf/train/config.hpp"
#include "mrf/train/corpus.hpp"

namespace mrf::train {

struct ValidationResult {
  double loss = 0.0;  // token-weighted mean LM loss over all batches
  std::map<std::string, double> by_domain;
};

ValidationResult evaluate(const model::Checkpoint& ckpt, const std::vector<model::TokenBatch>& batches);

struct TrainResult {
  std::vector<nlohmann::json> records;  // step records followed by one eval record
  ValidationResult validation;
};

// True for tensors excluded from weight decay: norm gains, embeddings and
// expert keys.
bool exempt_from_decay(const std::string& name);

// Trains `ckpt` in place on the train split. Each step record
// {event, step, lr, lm_loss, aux_loss, z_loss, total_loss, grad_norm,
// grad_norm_raw, domain} is written to `log` as one JSON line when given;
// grad_norm is measured after clipping. A non-finite loss throws
// NumericError naming the step.
TrainResult fit(model::Checkpoint& ckpt, const Corpus& corpus, const TrainConfig& cfg,
                  std::ostream* log = nullptr);

}  // namespace mrf::train
