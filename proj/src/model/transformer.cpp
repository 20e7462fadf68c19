#include "mrf/model/transformer.hpp"

#include "mrf/error.hpp"
#include "mrf/model/tokenizer.hpp"
#include "mrf/numeric/ops.hpp"

namespace mrf::model {

moe::LayerParams moe_layer_params(const Checkpoint& ckpt, std::size_t layer) {
  const moe::MoEConfig& cfg = ckpt.moe();
  moe::LayerParams params;
  for (std::size_t e = 0; e < cfg.n_experts; ++e) {
    params.experts.push_back({ckpt.tensor(expert_prefix(layer, e) + "w1"), ckpt.tensor(expert_prefix(layer, e) + "w2")});
  }
  const std::string p = layer_prefix(layer);
  switch (cfg.router_mode) {
    case moe::RouterMode::mixture:
      for (std::size_t j = 0; j < cfg.n_routers; ++j) params.router_mats.push_back(ckpt.tensor(router_name(layer, j)));
      for (std::size_t e = 0; e < cfg.n_experts; ++e)
        for (std::size_t c = 0; c < cfg.keys_per_expert; ++c)
          params.expert_keys.push_back(ckpt.tensor(expert_key_name(layer, e, c)));
      break;
    case moe::RouterMode::vanilla:
    case moe::RouterMode::switch_top1:
      params.baseline = {cfg.router_mode, ckpt.tensor(p + "router.linear.w"), {}};
      break;
    case moe::RouterMode::mlp:
      params.baseline = {cfg.router_mode, ckpt.tensor(p + "router.mlp.w1"), ckpt.tensor(p + "router.mlp.w2")};
      break;
  }
  return params;
}

Tensor dense_ffn(const Checkpoint& ckpt, std::size_t layer, const Tensor& x) {
  const std::string p = layer_prefix(layer);
  return moe::expert_forward(x, {ckpt.tensor(p + "ffn.w1"), ckpt.tensor(p + "ffn.w2")});
}

ForwardResult forward(const Checkpoint& ckpt, const TokenBatch& batch, const ForwardOptions& options) {
  const ModelConfig& cfg = ckpt.config();
  if (batch.seq == 0 || batch.batch == 0 || batch.inputs.size() != batch.batch * batch.seq) {
    throw ShapeError("token batch layout does not match batch x seq");
  }
  if (batch.seq > cfg.seq_len) {
    throw ShapeError("sequence length " + std::to_string(batch.seq) + " exceeds model seq_len " +
                     std::to_string(cfg.seq_len));
  }
  const std::size_t rows = batch.inputs.size();
  std::vector<std::int32_t> positions(rows);
  std::vector<std::uint8_t> valid(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    positions[i] = static_cast<std::int32_t>(i % batch.seq);
    valid[i] = batch.inputs[i] != kPad;
  }

  ForwardResult result;
  Tensor h = add(embedding(ckpt.tensor("tok_emb"), batch.inputs), embedding(ckpt.tensor("pos_emb"), positions));
  std::vector<Tensor> aux_terms, z_terms;
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    const std::string p = layer_prefix(l);
    LayerTrace trace;
    const Tensor a = rms_norm(h, ckpt.tensor(p + "attn_norm.g"));
    const Tensor q = linear(a, ckpt.tensor(p + "attn.wq"));
    trace.keys = linear(a, ckpt.tensor(p + "attn.wk"));
    const Tensor v = linear(a, ckpt.tensor(p + "attn.wv"));
    const Tensor att = causal_attention(q, trace.keys, v, batch.batch, batch.seq, cfg.n_heads,
                                        options.keep_attention ? &trace.attention : nullptr);
    h = add(h, linear(att, ckpt.tensor(p + "attn.wo")));
    trace.ffn_input = rms_norm(h, ckpt.tensor(p + "ffn_norm.g"));
    if (ckpt.is_moe()) {
      moe::LayerOutput out = moe::moe_layer(trace.ffn_input, moe_layer_params(ckpt, l), ckpt.moe(), valid);
      h = add(h, out.y);
      aux_terms.push_back(out.aux_loss);
      z_terms.push_back(out.z_loss);
      trace.routing = std::move(out.trace);
    } else {
      h = add(h, dense_ffn(ckpt, l, trace.ffn_input));
    }
    result.layers.push_back(std::move(trace));
  }
  result.logits = linear(rms_norm(h, ckpt.tensor("final_norm.g")), ckpt.tensor("lm_head"));
  if (aux_terms.empty()) {
    result.aux_loss = Tensor::scalar(0.0);
    result.z_loss = Tensor::scalar(0.0);
  } else {
    const double inv = 1.0 / static_cast<double>(aux_terms.size());
    result.aux_loss = scale(add_n(aux_terms), inv);
    result.z_loss = scale(add_n(z_terms), inv);
  }
  return result;
}

LossTerms training_loss(const Checkpoint& ckpt, const TokenBatch& batch) {
  if (batch.targets.size() != batch.inputs.size()) throw ShapeError("training batch needs one target per input");
  ForwardResult fwd = forward(ckpt, batch);
  LossTerms terms;
  terms.lm = cross_entropy(fwd.logits, batch.targets, kPad);
  terms.aux = fwd.aux_loss;
  terms.z = fwd.z_loss;
  if (ckpt.is_moe()) {
    std::vector<Tensor> parts{terms.lm, terms.aux, terms.z};
    terms.total = add_n(parts);
  } else {
    terms.total = terms.lm;
  }
  return terms;
}

}  // namespace mrf::model
