#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "mrf/numeric/tensor.hpp"

namespace mrf {

// Records differentiable operations for one reverse pass.
//
// Constructing a GradTape makes it the active tape of the calling thread until
// it is destroyed (tapes nest; the previous one is restored). Operations whose
// inputs require gradients append an adjoint closure while a tape is active.
// Recording order is a topological order of the graph, so backward() replays
// the closures in reverse recording order.
class GradTape {
 public:
  GradTape();
  ~GradTape();
  GradTape(const GradTape&) = delete;
  GradTape& operator=(const GradTape&) = delete;

  // Seeds d(loss)/d(loss) = 1 and propagates adjoints into every tensor that
  // requires gradients. A tape can be replayed only once.
  void backward(const Tensor& loss);

  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

  static GradTape* active();
  void record(std::function<void()> adjoint);

 private:
  std::vector<std::function<void()>> nodes_;
  GradTape* previous_ = nullptr;
  bool consumed_ = false;
};

// Suspends recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  GradTape* saved_;
};

// When enabled, every operation verifies its output is finite and throws
// NumericError otherwise. On by default in builds without NDEBUG.
void set_finite_checks(bool enabled);
bool finite_checks_enabled();

}  // namespace mrf
