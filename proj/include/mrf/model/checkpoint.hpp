#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "mrf/model/config.hpp"
#include "mrf/moe/config.hpp"
#include "mrf/numeric/tensor.hpp"

namespace mrf::model {

struct TensorSpec {
  std::string name;
  Shape shape;
};

// Every tensor the architecture declares, in canonical order. With a MoE
// config the per-layer FFN is replaced by experts and router parameters.
std::vector<TensorSpec> architecture(const ModelConfig& cfg, const std::optional<moe::MoEConfig>& moe = {});

// Parameter-name helpers (canonical naming used across the project).
std::string layer_prefix(std::size_t layer);
std::string expert_prefix(std::size_t layer, std::size_t expert);
std::string router_name(std::size_t layer, std::size_t router);
std::string expert_key_name(std::size_t layer, std::size_t expert, std::size_t key);

// Named-tensor store for a dense or MoE model.
//
// A frozen checkpoint rejects every mutation through this interface and will
// not hand out mutable parameter handles.
class Checkpoint {
 public:
  explicit Checkpoint(ModelConfig config, std::optional<moe::MoEConfig> moe = std::nullopt);

  const ModelConfig& config() const { return config_; }
  const std::optional<moe::MoEConfig>& moe_config() const { return moe_; }
  const moe::MoEConfig& moe() const;
  bool is_moe() const { return moe_.has_value(); }

  bool frozen() const { return frozen_; }
  void freeze() { frozen_ = true; }

  bool contains(const std::string& name) const { return index_.contains(name); }
  const Tensor& tensor(const std::string& name) const;
  const std::vector<std::string>& names() const { return names_; }
  std::size_t parameter_count() const;

  // Inserts or replaces; the shape must match the declared one if declared.
  void set(const std::string& name, Tensor value);

  // Handles for training. Throws StateError when frozen.
  std::vector<Tensor> parameters();
  Tensor& mutable_tensor(const std::string& name);

  // Every declared tensor present with the declared shape (ShapeError if not).
  void validate() const;

  Checkpoint clone() const;  // deep, unfrozen copy

 private:
  ModelConfig config_;
  std::optional<moe::MoEConfig> moe_;
  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
  std::unordered_map<std::string, std::size_t> index_;
  bool frozen_ = false;
};

// Fresh dense model: matrices N(0, 0.02), norm gains 1.
Checkpoint init_dense(const ModelConfig& cfg, std::uint64_t seed);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace mrf::model
