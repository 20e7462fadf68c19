#include "mrf/train/trainer.hpp"

#include <cmath>
#include <sstream>

#include "mrf/error.hpp"
#include "mrf/model/tokenizer.hpp"
#include "mrf/numeric/ops.hpp"
#include "mrf/numeric/tape.hpp"
#include "mrf/train/optimizer.hpp"

namespace mrf::train {

namespace {
bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// Seed streams.
constexpr std::uint64_t kTrainStream = 1;
constexpr std::uint64_t kValidStream = 2;
}  // namespace

bool exempt_from_decay(const std::string& name) {
  return ends_with(name, ".g") || name == "tok_emb" || name == "pos_emb" || name.find(".key.") != std::string::npos;
}

ValidationResult evaluate(const model::Checkpoint& ckpt, const std::vector<model::TokenBatch>& batches) {
  if (batches.empty()) throw DataError("validation needs at least one batch");
  NoGradGuard no_grad;
  std::map<std::string, std::pair<double, double>> acc;  // domain -> (loss sum, token count)
  double total = 0.0, count = 0.0;
  for (const auto& b : batches) {
    std::size_t tokens = 0;
    for (auto t : b.targets) tokens += t != model::kPad;
    if (tokens == 0) continue;
    const double loss = cross_entropy(model::forward(ckpt, b).logits, b.targets, model::kPad).item();
    const double n = static_cast<double>(tokens);
    acc[b.domain].first += loss * n;
    acc[b.domain].second += n;
    total += loss * n;
    count += n;
  }
  if (count == 0.0) throw DataError("validation batches contain no targets");
  ValidationResult r;
  r.loss = total / count;
  for (const auto& [name, v] : acc) r.by_domain[name] = v.first / v.second;
  return r;
}

TrainResult fit(model::Checkpoint& ckpt, const Corpus& corpus, const TrainConfig& cfg, std::ostream* log) {
  cfg.validate();
  if (cfg.seq > ckpt.config().seq_len) throw ConfigError("training seq exceeds the model's seq_len");
  const bool keys_trainable = !ckpt.is_moe() || ckpt.moe().train_keys;

  std::vector<Tensor> params;
  std::vector<bool> decay;
  for (const std::string& name : ckpt.names()) {
    Tensor& t = ckpt.mutable_tensor(name);
    const bool is_key = name.find(".key.") != std::string::npos;
    const bool trainable = !is_key || keys_trainable;
    t.set_requires_grad(trainable);
    t.zero_grad();
    if (!trainable) continue;
    params.push_back(t);
    decay.push_back(!exempt_from_decay(name));
  }
  AdamW opt(params, decay, {cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps, cfg.weight_decay});
  BatchIterator batches(corpus, Split::train, cfg.sequences_per_batch(), cfg.seq, Rng::derive(cfg.seed, kTrainStream));

  TrainResult result;
  for (std::size_t step = 0; step < cfg.total_steps; ++step) {
    const model::TokenBatch batch = batches.next();
    const double lr = lr_at(step + 1, cfg);
    double lm, aux, z, total;
    {
      GradTape tape;
      const model::LossTerms terms = model::training_loss(ckpt, batch);
      lm = terms.lm.item();
      aux = terms.aux.item();
      z = terms.z.item();
      total = terms.total.item();
      if (!std::isfinite(total)) {
        std::ostringstream msg;
        msg << "non-finite loss at step " << step << " (lm=" << lm << ", aux=" << aux << ", z=" << z
            << ", domain=" << batch.domain << ")";
        throw NumericError(msg.str());
      }
      tape.backward(terms.total);
    }
    const double raw_norm = clip_grad_norm(params, cfg.clip_norm);
    if (!std::isfinite(raw_norm)) throw NumericError("non-finite gradient norm at step " + std::to_string(step));
    const double clipped = std::min(raw_norm, cfg.clip_norm);
    opt.step(lr);
    opt.zero_grad();

    if (step % cfg.log_every == 0 || step + 1 == cfg.total_steps) {
      nlohmann::json rec = {{"event", "step"},      {"step", step},        {"lr", lr},
                            {"lm_loss", lm},        {"aux_loss", aux},     {"z_loss", z},
                            {"total_loss", total},  {"grad_norm", clipped}, {"grad_norm_raw", raw_norm},
                            {"domain", batch.domain}};
      if (log) *log << rec.dump() << '\n' << std::flush;
      result.records.push_back(std::move(rec));
    }
  }
  for (Tensor& p : params) p.set_requires_grad(false);

  result.validation = evaluate(
      ckpt, validation_batches(corpus, cfg.eval_batches, cfg.sequences_per_batch(), cfg.seq,
                               Rng::derive(cfg.seed, kValidStream)));
  nlohmann::json rec = {{"event", "eval"},
                        {"step", cfg.total_steps},
                        {"val_loss", result.validation.loss},
                        {"val_loss_by_domain", result.validation.by_domain}};
  if (log) *log << rec.dump() << '\n' << std::flush;
  result.records.push_back(std::move(rec));
  return result;
}

}  // namespace mrf::train
