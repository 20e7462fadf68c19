#pragma once

// Central finite-difference oracle for analytic gradients. Test-only: it
// evaluates the loss through the forward path with recording suspended and
// never looks at the adjoint code it is checking.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "mrf/numeric/ops.hpp"
#include "mrf/numeric/tape.hpp"
#include "mrf/numeric/tensor.hpp"

namespace mrf::testing {

struct GradCheckResult {
  double max_rel_error = 0.0;  // elementwise |a-n| / max(|a|, |n|, floor)
  double max_abs_error = 0.0;
  std::string worst;           // "param[index]" of the worst element
};

enum class Stencil {
  three_point,  // (f(+h) - f(-h)) / 2h, error O(h^2)
  five_point,   // (-f(+2h) + 8f(+h) - 8f(-h) + f(-2h)) / 12h, error O(h^4)
};

// The loss function must rebuild the graph from `params` on every call.
// The five-point stencil tolerates a larger step, which keeps cancellation
// error small when individual gradients are tiny relative to the loss.
inline GradCheckResult check_gradients(std::vector<Tensor> params,
                                       const std::function<Tensor()>& loss_fn,
                                       double step = 1e-5, double floor = 1e-8,
                                       Stencil stencil = Stencil::three_point) {
  for (Tensor& p : params) {
    p.set_requires_grad(true);
    p.zero_grad();
  }
  {
    GradTape tape;
    Tensor loss = loss_fn();
    tape.backward(loss);
  }
  GradCheckResult result;
  NoGradGuard no_grad;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& p = params[pi];
    std::vector<double> analytic(p.size(), 0.0);
    if (p.has_grad()) std::copy(p.grad().begin(), p.grad().end(), analytic.begin());
    auto values = p.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      auto at = [&](double offset) {
        values[i] = saved + offset;
        return loss_fn().item();
      };
      double numeric = 0.0;
      if (stencil == Stencil::three_point) {
        numeric = (at(step) - at(-step)) / (2.0 * step);
      } else {
        numeric = (-at(2 * step) + 8 * at(step) - 8 * at(-step) + at(-2 * step)) / (12.0 * step);
      }
      values[i] = saved;
      const double abs_err = std::abs(analytic[i] - numeric);
      const double rel = abs_err / std::max({std::abs(analytic[i]), std::abs(numeric), floor});
      result.max_abs_error = std::max(result.max_abs_error, abs_err);
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst = "param" + std::to_string(pi) + "[" + std::to_string(i) + "]";
      }
    }
  }
  return result;
}

}  // namespace mrf::testing
