#include "mrf/model/checkpoint.hpp"

#include "mrf/error.hpp"
#include "mrf/model/archive.hpp"
#include "mrf/numeric/rng.hpp"

namespace mrf::model {

std::string layer_prefix(std::size_t layer) { return "layer." + std::to_string(layer) + "."; }

std::string expert_prefix(std::size_t layer, std::size_t expert) {
  return layer_prefix(layer) + "expert." + std::to_string(expert) + ".";
}

std::string router_name(std::size_t layer, std::size_t router) {
  return layer_prefix(layer) + "router." + std::to_string(router) + ".w";
}

std::string expert_key_name(std::size_t layer, std::size_t expert, std::size_t key) {
  return expert_prefix(layer, expert) + "key." + std::to_string(key);
}

std::vector<TensorSpec> architecture(const ModelConfig& cfg, const std::optional<moe::MoEConfig>& moe) {
  cfg.validate();
  const std::size_t d = cfg.d_model;
  std::vector<TensorSpec> specs;
  specs.push_back({"tok_emb", {cfg.vocab_size, d}});
  specs.push_back({"pos_emb", {cfg.seq_len, d}});
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    const std::string p = layer_prefix(l);
    specs.push_back({p + "attn_norm.g", {d}});
    specs.push_back({p + "attn.wq", {d, d}});
    specs.push_back({p + "attn.wk", {d, d}});
    specs.push_back({p + "attn.wv", {d, d}});
    specs.push_back({p + "attn.wo", {d, d}});
    specs.push_back({p + "ffn_norm.g", {d}});
    if (!moe) {
      specs.push_back({p + "ffn.w1", {cfg.ffn_hidden, d}});
      specs.push_back({p + "ffn.w2", {d, cfg.ffn_hidden}});
      continue;
    }
    for (std::size_t e = 0; e < moe->n_experts; ++e) {
      specs.push_back({expert_prefix(l, e) + "w1", {cfg.ffn_hidden, d}});
      specs.push_back({expert_prefix(l, e) + "w2", {d, cfg.ffn_hidden}});
    }
    switch (moe->router_mode) {
      case moe::RouterMode::mixture:
        for (std::size_t j = 0; j < moe->n_routers; ++j) specs.push_back({router_name(l, j), {moe->router_dim, d}});
        for (std::size_t e = 0; e < moe->n_experts; ++e)
          for (std::size_t c = 0; c < moe->keys_per_expert; ++c)
            specs.push_back({expert_key_name(l, e, c), {moe->router_dim}});
        break;
      case moe::RouterMode::vanilla:
      case moe::RouterMode::switch_top1:
        specs.push_back({p + "router.linear.w", {moe->n_experts, d}});
        break;
      case moe::RouterMode::mlp:
        specs.push_back({p + "router.mlp.w1", {d, d}});
        specs.push_back({p + "router.mlp.w2", {moe->n_experts, d}});
        break;
    }
  }
  specs.push_back({"final_norm.g", {d}});
  specs.push_back({"lm_head", {cfg.vocab_size, d}});
  return specs;
}

Checkpoint::Checkpoint(ModelConfig config, std::optional<moe::MoEConfig> moe)
    : config_(config), moe_(std::move(moe)) {
  config_.validate();
}

const moe::MoEConfig& Checkpoint::moe() const {
  if (!moe_) throw StateError("checkpoint is dense; it has no MoE config");
  return *moe_;
}

const Tensor& Checkpoint::tensor(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ShapeError("checkpoint has no tensor '" + name + "'");
  return tensors_[it->second];
}

std::size_t Checkpoint::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor& t : tensors_) n += t.size();
  return n;
}

void Checkpoint::set(const std::string& name, Tensor value) {
  if (frozen_) throw StateError("cannot modify frozen checkpoint (tensor '" + name + "')");
  auto it = index_.find(name);
  if (it != index_.end()) {
    if (tensors_[it->second].shape() != value.shape()) {
      throw ShapeError("tensor '" + name + "' shape " + shape_to_string(value.shape()) + " differs from " +
                       shape_to_string(tensors_[it->second].shape()));
    }
    tensors_[it->second] = std::move(value);
    return;
  }
  index_.emplace(name, names_.size());
  names_.push_back(name);
  tensors_.push_back(std::move(value));
}

std::vector<Tensor> Checkpoint::parameters() {
  if (frozen_) throw StateError("frozen checkpoint does not expose trainable parameters");
  return tensors_;
}

Tensor& Checkpoint::mutable_tensor(const std::string& name) {
  if (frozen_) throw StateError("cannot modify frozen checkpoint (tensor '" + name + "')");
  auto it = index_.find(name);
  if (it == index_.end()) throw ShapeError("checkpoint has no tensor '" + name + "'");
  return tensors_[it->second];
}

void Checkpoint::validate() const {
  const auto specs = architecture(config_, moe_);
  for (const auto& spec : specs) {
    if (!contains(spec.name)) throw ShapeError("checkpoint is missing tensor '" + spec.name + "'");
    const Tensor& t = tensor(spec.name);
    if (t.shape() != spec.shape) {
      throw ShapeError("shape mismatch for '" + spec.name + "': " + shape_to_string(t.shape()) + " vs declared " +
                       shape_to_string(spec.shape));
    }
  }
  if (specs.size() != names_.size()) throw ShapeError("checkpoint holds tensors the architecture does not declare");
}

Checkpoint Checkpoint::clone() const {
  Checkpoint out(config_, moe_);
  for (std::size_t i = 0; i < names_.size(); ++i) out.set(names_[i], tensors_[i].clone());
  return out;
}

Checkpoint init_dense(const ModelConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  Checkpoint ckpt(cfg);
  for (const auto& spec : architecture(cfg)) {
    const bool gain = spec.shape.size() == 1;
    ckpt.set(spec.name, gain ? Tensor::full(spec.shape, 1.0) : Tensor::randn(spec.shape, 0.02, rng));
  }
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir) {
  nlohmann::json meta;
  meta["kind"] = ckpt.is_moe() ? "moe" : "dense";
  meta["model_config"] = ckpt.config();
  if (ckpt.is_moe()) meta["moe_config"] = ckpt.moe();
  meta["frozen"] = ckpt.frozen();
  std::vector<NamedTensor> tensors;
  for (const auto& name : ckpt.names()) tensors.push_back({name, ckpt.tensor(name)});
  write_archive(dir, std::move(meta), tensors);
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  Archive archive = read_archive(dir);
  const std::string kind = archive.meta.value("kind", "");
  if (kind != "dense" && kind != "moe") throw FormatError("archive kind '" + kind + "' is not a checkpoint");
  ModelConfig cfg;
  std::optional<moe::MoEConfig> moe;
  try {
    cfg = archive.meta.at("model_config").get<ModelConfig>();
    if (kind == "moe") moe = archive.meta.at("moe_config").get<moe::MoEConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed config in manifest: " + std::string(e.what()));
  }
  Checkpoint ckpt(cfg, moe);
  for (auto& [name, t] : archive.tensors) ckpt.set(name, std::move(t));
  ckpt.validate();
  if (archive.meta.value("frozen", false)) ckpt.freeze();
  return ckpt;
}

}  // namespace mrf::model
