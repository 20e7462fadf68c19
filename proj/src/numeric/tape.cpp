#include "mrf/numeric/tape.hpp"

#include <atomic>

#include "mrf/error.hpp"

namespace mrf {

namespace {
thread_local GradTape* g_active = nullptr;

#ifdef NDEBUG
std::atomic<bool> g_finite_checks{false};
#else
std::atomic<bool> g_finite_checks{true};
#endif
}  // namespace

GradTape::GradTape() : previous_(g_active) { g_active = this; }

GradTape::~GradTape() { g_active = previous_; }

GradTape* GradTape::active() { return g_active; }

void GradTape::record(std::function<void()> adjoint) {
  if (consumed_) throw StateError("cannot record on a tape that has already run backward");
  nodes_.push_back(std::move(adjoint));
}

void GradTape::backward(const Tensor& loss) {
  if (consumed_) throw StateError("backward called twice on the same tape");
  if (loss.size() != 1) {
    throw ShapeError("backward needs a scalar loss, got " + shape_to_string(loss.shape()));
  }
  if (!loss.requires_grad()) throw StateError("loss does not depend on any tracked tensor");
  consumed_ = true;
  Tensor seed = loss;
  seed.mutable_grad()[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
  nodes_.clear();
  nodes_.shrink_to_fit();
}

NoGradGuard::NoGradGuard() : saved_(g_active) { g_active = nullptr; }
NoGradGuard::~NoGradGuard() { g_active = saved_; }

void set_finite_checks(bool enabled) { g_finite_checks.store(enabled); }
bool finite_checks_enabled() { return g_finite_checks.load(std::memory_order_relaxed); }

}  // namespace mrf
