#pragma once

#include <vector>

#include "mrf/numeric/tensor.hpp"

namespace mrf::train {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 0.1;
};

// Adam with decoupled weight decay. Parameters without a gradient are left
// untouched (their moments do not advance).
class AdamW {
 public:
  AdamW(std::vector<Tensor> params, std::vector<bool> decay, AdamWConfig cfg);

  void step(double lr);
  void zero_grad();
  std::size_t steps_taken() const { return t_; }

 private:
  std::vector<Tensor> params_;
  std::vector<bool> decay_;
  AdamWConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

// Global L2 norm of all gradients; scales them down to max_norm when larger.
// Returns the norm before clipping.
double clip_grad_norm(const std::vector<Tensor>& params, double max_norm);

}  // namespace mrf::train
