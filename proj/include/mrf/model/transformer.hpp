#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mrf/model/checkpoint.hpp"
#include "mrf/moe/layer.hpp"
#include "mrf/moe/routing.hpp"
#include "mrf/numeric/tensor.hpp"

namespace mrf::model {

// `batch` sequences of `seq` token ids, packed row-major. Targets are the
// next-token ids (kPad = ignored); empty when only a forward pass is needed.
struct TokenBatch {
  std::size_t batch = 1;
  std::size_t seq = 0;
  std::vector<std::int32_t> inputs;
  std::vector<std::int32_t> targets;
  std::string domain;
};

// What one transformer block exposes to the upcycling and analysis code.
struct LayerTrace {
  Tensor ffn_input;  // [B*T, d] normalized hidden state entering the FFN / MoE
  Tensor keys;       // [B*T, h*head_dim] attention keys, head h in columns [h*hd, (h+1)*hd)
  std::vector<double> attention;  // [B, h, T, T] when requested
  std::optional<moe::RoutingTrace> routing;
};

struct ForwardOptions {
  bool keep_attention = false;
};

struct ForwardResult {
  Tensor logits;  // [B*T, vocab]
  std::vector<LayerTrace> layers;
  Tensor aux_loss;  // mean over MoE layers (0 for a dense model)
  Tensor z_loss;
};

// Pre-norm decoder: learned absolute positions, RMS norms, bias-free causal
// multi-head attention, GELU FFN (or MoE layer), untied LM head.
ForwardResult forward(const Checkpoint& ckpt, const TokenBatch& batch, const ForwardOptions& options = {});

moe::LayerParams moe_layer_params(const Checkpoint& ckpt, std::size_t layer);

// The dense FFN of `layer` applied to x.
Tensor dense_ffn(const Checkpoint& ckpt, std::size_t layer, const Tensor& x);

struct LossTerms {
  Tensor total;  // lm + aux + z
  Tensor lm;
  Tensor aux;
  Tensor z;
};

LossTerms training_loss(const Checkpoint& ckpt, const TokenBatch& batch);

}  // namespace mrf::model
