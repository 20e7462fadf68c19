#include "mrf/numeric/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <utility>

#include "mrf/error.hpp"
#include "mrf/numeric/tape.hpp"

namespace mrf {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using StridedMap = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;
using ConstStridedMap = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;

ConstMatMap view(const Tensor& t) { return {t.data().data(), Eigen::Index(t.rows()), Eigen::Index(t.cols())}; }

MatMap grad_view(const Tensor& t) {
  auto g = t.mutable_grad();
  return {g.data(), Eigen::Index(t.rows()), Eigen::Index(t.cols())};
}

ConstMatMap out_grad(const Tensor& out) {
  return {out.grad().data(), Eigen::Index(out.rows()), Eigen::Index(out.cols())};
}

bool tracking(std::initializer_list<const Tensor*> inputs) {
  if (GradTape::active() == nullptr) return false;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

template <class Fn>
void record(Tensor& out, Fn&& adjoint) {
  out.set_requires_grad(true);
  GradTape::active()->record(std::forward<Fn>(adjoint));
}

void check_finite(const Tensor& t, const char* op) {
  if (!finite_checks_enabled()) return;
  for (double v : t.data()) {
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite value produced by ") + op);
  }
}

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(op) + " expects a matrix, got " + shape_to_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                     shape_to_string(b.shape()));
  }
}

template <class Fn>
Tensor unary(const Tensor& a, const char* op, Fn&& value_fn) {
  Tensor out = Tensor::zeros(a.shape());
  auto x = a.data();
  auto y = out.mutable_data();
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = value_fn(x[i]);
  check_finite(out, op);
  return out;
}

double gelu_value(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double gelu_derivative(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

// Output shape of a last-axis reduction.
Shape drop_last_axis(const Shape& s) {
  if (s.size() <= 1) return {};
  return {s[0]};
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  if (a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: inner dimensions differ " + shape_to_string(a.shape()) + " x " +
                     shape_to_string(b.shape()));
  }
  Tensor out = Tensor::zeros({a.dim(0), b.dim(1)});
  MatMap(out.mutable_data().data(), a.dim(0), b.dim(1)).noalias() = view(a) * view(b);
  check_finite(out, "matmul");
  if (tracking({&a, &b})) {
    record(out, [a, b, out]() mutable {
      if (!out.has_grad()) return;
      auto g = out_grad(out);
      if (a.requires_grad()) grad_view(a).noalias() += g * view(b).transpose();
      if (b.requires_grad()) grad_view(b).noalias() += view(a).transpose() * g;
    });
  }
  return out;
}

Tensor linear(const Tensor& x, const Tensor& w) {
  require_matrix(x, "linear");
  require_matrix(w, "linear");
  if (x.dim(1) != w.dim(1)) {
    throw ShapeError("linear: input " + shape_to_string(x.shape()) + " vs weight " +
                     shape_to_string(w.shape()));
  }
  Tensor out = Tensor::zeros({x.dim(0), w.dim(0)});
  MatMap(out.mutable_data().data(), x.dim(0), w.dim(0)).noalias() = view(x) * view(w).transpose();
  check_finite(out, "linear");
  if (tracking({&x, &w})) {
    record(out, [x, w, out]() mutable {
      if (!out.has_grad()) return;
      auto g = out_grad(out);
      if (x.requires_grad()) grad_view(x).noalias() += g * view(w);
      if (w.requires_grad()) grad_view(w).noalias() += g.transpose() * view(x);
    });
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = Tensor::zeros(a.shape());
  auto y = out.mutable_data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[i] + b[i];
  check_finite(out, "add");
  if (tracking({&a, &b})) {
    record(out, [a, b, out]() mutable {
      if (!out.has_grad()) return;
      if (a.requires_grad()) a.accumulate_grad(out.grad());
      if (b.requires_grad()) b.accumulate_grad(out.grad());
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out = Tensor::zeros(a.shape());
  auto y = out.mutable_data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[i] - b[i];
  check_finite(out, "sub");
  if (tracking({&a, &b})) {
    record(out, [a, b, out]() mutable {
      if (!out.has_grad()) return;
      if (a.requires_grad()) a.accumulate_grad(out.grad());
      if (b.requires_grad()) {
        auto g = out.grad();
        auto gb = b.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out = Tensor::zeros(a.shape());
  auto y = out.mutable_data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[i] * b[i];
  check_finite(out, "mul");
  if (tracking({&a, &b})) {
    record(out, [a, b, out]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      if (a.requires_grad()) {
        auto ga = a.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b[i];
      }
      if (b.requires_grad()) {
        auto gb = b.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a[i];
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& a, double factor) {
  Tensor out = unary(a, "scale", [factor](double x) { return x * factor; });
  if (tracking({&a})) {
    record(out, [a, out, factor]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto ga = a.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += factor * g[i];
    });
  }
  return out;
}

Tensor add_n(std::span<const Tensor> terms) {
  if (terms.empty()) throw ShapeError("add_n of zero tensors");
  Tensor out = Tensor::zeros(terms.front().shape());
  auto y = out.mutable_data();
  bool any_grad = false;
  for (const Tensor& t : terms) {
    require_same_shape(terms.front(), t, "add_n");
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += t[i];
    any_grad = any_grad || t.requires_grad();
  }
  check_finite(out, "add_n");
  if (any_grad && GradTape::active()) {
    std::vector<Tensor> inputs(terms.begin(), terms.end());
    record(out, [inputs, out]() mutable {
      if (!out.has_grad()) return;
      for (const Tensor& t : inputs) {
        if (t.requires_grad()) t.accumulate_grad(out.grad());
      }
    });
  }
  return out;
}

Tensor square(const Tensor& a) {
  Tensor out = unary(a, "square", [](double x) { return x * x; });
  if (tracking({&a})) {
    record(out, [a, out]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto ga = a.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += 2.0 * a[i] * g[i];
    });
  }
  return out;
}

Tensor gelu(const Tensor& a) {
  Tensor out = unary(a, "gelu", gelu_value);
  if (tracking({&a})) {
    record(out, [a, out]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto ga = a.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += gelu_derivative(a[i]) * g[i];
    });
  }
  return out;
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.data()) total += v;
  Tensor out = Tensor::scalar(total);
  check_finite(out, "sum");
  if (tracking({&a})) {
    record(out, [a, out]() mutable {
      if (!out.has_grad()) return;
      const double g = out.grad()[0];
      for (double& v : a.mutable_grad()) v += g;
    });
  }
  return out;
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

Tensor mean_rows(const Tensor& a) {
  require_matrix(a, "mean_rows");
  const std::size_t r = a.rows(), c = a.cols();
  Tensor out = Tensor::zeros({c});
  auto y = out.mutable_data();
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) y[j] += a[i * c + j];
  }
  for (double& v : y) v /= static_cast<double>(r);
  check_finite(out, "mean_rows");
  if (tracking({&a})) {
    record(out, [a, out, r, c]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto ga = a.mutable_grad();
      const double inv = 1.0 / static_cast<double>(r);
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[j] * inv;
      }
    });
  }
  return out;
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.size()) {
    throw ShapeError("reshape " + shape_to_string(a.shape()) + " -> " + shape_to_string(shape));
  }
  Tensor out = Tensor::from(std::move(shape), std::vector<double>(a.data().begin(), a.data().end()));
  if (tracking({&a})) {
    record(out, [a, out]() mutable {
      if (!out.has_grad()) return;
      a.accumulate_grad(out.grad());
    });
  }
  return out;
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_rows of zero tensors");
  const std::size_t c = parts.front().cols();
  std::size_t total_rows = 0;
  bool any_grad = false;
  for (const Tensor& p : parts) {
    if (p.rank() > 2 || p.cols() != c) {
      throw ShapeError("concat_rows: incompatible part " + shape_to_string(p.shape()));
    }
    total_rows += p.rows();
    any_grad = any_grad || p.requires_grad();
  }
  std::vector<double> values;
  values.reserve(total_rows * c);
  for (const Tensor& p : parts) values.insert(values.end(), p.data().begin(), p.data().end());
  Tensor out = Tensor::from({total_rows, c}, std::move(values));
  if (any_grad && GradTape::active()) {
    std::vector<Tensor> inputs(parts.begin(), parts.end());
    record(out, [inputs, out]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      std::size_t offset = 0;
      for (const Tensor& p : inputs) {
        if (p.requires_grad()) p.accumulate_grad(g.subspan(offset, p.size()));
        offset += p.size();
      }
    });
  }
  return out;
}

Tensor embedding(const Tensor& table, std::span<const std::int32_t> ids) {
  require_matrix(table, "embedding");
  const std::size_t vocab = table.rows(), d = table.cols();
  if (ids.empty()) throw ShapeError("embedding of an empty id sequence");
  Tensor out = Tensor::zeros({ids.size(), d});
  auto y = out.mutable_data();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
      throw DataError("token id " + std::to_string(ids[i]) + " out of range for vocabulary of " +
                      std::to_string(vocab));
    }
    std::copy_n(table.data().begin() + ids[i] * d, d, y.begin() + i * d);
  }
  if (tracking({&table})) {
    std::vector<std::int32_t> idx(ids.begin(), ids.end());
    record(out, [table, out, idx, d]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto gt = table.mutable_grad();
      for (std::size_t i = 0; i < idx.size(); ++i) {
        for (std::size_t j = 0; j < d; ++j) gt[idx[i] * d + j] += g[i * d + j];
      }
    });
  }
  return out;
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows) {
  require_matrix(x, "gather_rows");
  const std::size_t c = x.cols();
  if (rows.empty()) throw ShapeError("gather_rows with no rows");
  Tensor out = Tensor::zeros({rows.size(), c});
  auto y = out.mutable_data();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= x.rows()) throw ShapeError("gather_rows: row index out of range");
    std::copy_n(x.data().begin() + rows[i] * c, c, y.begin() + i * c);
  }
  if (tracking({&x})) {
    std::vector<std::size_t> idx(rows.begin(), rows.end());
    record(out, [x, out, idx, c]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto gx = x.mutable_grad();
      for (std::size_t i = 0; i < idx.size(); ++i) {
        for (std::size_t j = 0; j < c; ++j) gx[idx[i] * c + j] += g[i * c + j];
      }
    });
  }
  return out;
}

Tensor scatter_rows(const Tensor& src, std::span<const std::size_t> rows, std::size_t n_rows) {
  require_matrix(src, "scatter_rows");
  if (rows.size() != src.rows()) throw ShapeError("scatter_rows: index count differs from row count");
  const std::size_t c = src.cols();
  Tensor out = Tensor::zeros({n_rows, c});
  auto y = out.mutable_data();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= n_rows) throw ShapeError("scatter_rows: row index out of range");
    for (std::size_t j = 0; j < c; ++j) y[rows[i] * c + j] += src[i * c + j];
  }
  if (tracking({&src})) {
    std::vector<std::size_t> idx(rows.begin(), rows.end());
    record(out, [src, out, idx, c]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto gs = src.mutable_grad();
      for (std::size_t i = 0; i < idx.size(); ++i) {
        for (std::size_t j = 0; j < c; ++j) gs[i * c + j] += g[idx[i] * c + j];
      }
    });
  }
  return out;
}

Tensor gather_elements(const Tensor& x, std::span<const std::size_t> rows,
                       std::span<const std::size_t> cols) {
  require_matrix(x, "gather_elements");
  if (rows.size() != cols.size() || rows.empty()) {
    throw ShapeError("gather_elements: index lists must be non-empty and equal length");
  }
  const std::size_t c = x.cols();
  Tensor out = Tensor::zeros({rows.size()});
  auto y = out.mutable_data();
  std::vector<std::size_t> flat(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= x.rows() || cols[i] >= c) throw ShapeError("gather_elements: index out of range");
    flat[i] = rows[i] * c + cols[i];
    y[i] = x[flat[i]];
  }
  if (tracking({&x})) {
    record(out, [x, out, flat]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto gx = x.mutable_grad();
      for (std::size_t i = 0; i < flat.size(); ++i) gx[flat[i]] += g[i];
    });
  }
  return out;
}

Tensor scale_rows(const Tensor& x, const Tensor& g) {
  require_matrix(x, "scale_rows");
  if (g.size() != x.rows()) throw ShapeError("scale_rows: one factor per row required");
  const std::size_t r = x.rows(), c = x.cols();
  Tensor out = Tensor::zeros(x.shape());
  auto y = out.mutable_data();
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) y[i * c + j] = x[i * c + j] * g[i];
  }
  check_finite(out, "scale_rows");
  if (tracking({&x, &g})) {
    record(out, [x, g, out, r, c]() mutable {
      if (!out.has_grad()) return;
      auto dy = out.grad();
      if (x.requires_grad()) {
        auto gx = x.mutable_grad();
        for (std::size_t i = 0; i < r; ++i) {
          for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += dy[i * c + j] * g[i];
        }
      }
      if (g.requires_grad()) {
        auto gg = g.mutable_grad();
        for (std::size_t i = 0; i < r; ++i) {
          double acc = 0.0;
          for (std::size_t j = 0; j < c; ++j) acc += dy[i * c + j] * x[i * c + j];
          gg[i] += acc;
        }
      }
    });
  }
  return out;
}

Tensor rms_norm(const Tensor& x, const Tensor& gain, double eps) {
  require_matrix(x, "rms_norm");
  const std::size_t r = x.rows(), c = x.cols();
  if (gain.size() != c) throw ShapeError("rms_norm: gain length differs from feature width");
  Tensor out = Tensor::zeros(x.shape());
  std::vector<double> inv_rms(r);
  auto y = out.mutable_data();
  for (std::size_t i = 0; i < r; ++i) {
    double ss = 0.0;
    for (std::size_t j = 0; j < c; ++j) ss += x[i * c + j] * x[i * c + j];
    inv_rms[i] = 1.0 / std::sqrt(ss / static_cast<double>(c) + eps);
    for (std::size_t j = 0; j < c; ++j) y[i * c + j] = x[i * c + j] * inv_rms[i] * gain[j];
  }
  check_finite(out, "rms_norm");
  if (tracking({&x, &gain})) {
    record(out, [x, gain, out, inv_rms, r, c]() mutable {
      if (!out.has_grad()) return;
      auto dy = out.grad();
      std::span<double> gx, gg;
      if (x.requires_grad()) gx = x.mutable_grad();
      if (gain.requires_grad()) gg = gain.mutable_grad();
      for (std::size_t i = 0; i < r; ++i) {
        const double inv = inv_rms[i];
        double proj = 0.0;  // mean_j(dxhat_j * xhat_j)
        for (std::size_t j = 0; j < c; ++j) {
          const double xhat = x[i * c + j] * inv;
          if (!gg.empty()) gg[j] += dy[i * c + j] * xhat;
          proj += dy[i * c + j] * gain[j] * xhat;
        }
        proj /= static_cast<double>(c);
        if (gx.empty()) continue;
        for (std::size_t j = 0; j < c; ++j) {
          const double xhat = x[i * c + j] * inv;
          gx[i * c + j] += inv * (dy[i * c + j] * gain[j] - xhat * proj);
        }
      }
    });
  }
  return out;
}

Tensor softmax(const Tensor& x) {
  if (x.size() == 0 || x.rank() == 0) throw ShapeError("softmax of an empty vector");
  const std::size_t r = x.rows(), c = x.cols();
  Tensor out = Tensor::zeros(x.shape());
  auto y = out.mutable_data();
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = x.data().data() + i * c;
    const double mx = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      y[i * c + j] = std::exp(row[j] - mx);
      z += y[i * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) y[i * c + j] /= z;
  }
  check_finite(out, "softmax");
  if (tracking({&x})) {
    record(out, [x, out, r, c]() mutable {
      if (!out.has_grad()) return;
      auto dy = out.grad();
      auto p = out.data();
      auto gx = x.mutable_grad();
      for (std::size_t i = 0; i < r; ++i) {
        double dotp = 0.0;
        for (std::size_t j = 0; j < c; ++j) dotp += dy[i * c + j] * p[i * c + j];
        for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += p[i * c + j] * (dy[i * c + j] - dotp);
      }
    });
  }
  return out;
}

Tensor logsumexp(const Tensor& x) {
  if (x.size() == 0 || x.rank() == 0) throw ShapeError("logsumexp of an empty vector");
  const std::size_t r = x.rows(), c = x.cols();
  Tensor out = Tensor::zeros(drop_last_axis(x.shape()));
  auto y = out.mutable_data();
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = x.data().data() + i * c;
    const double mx = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
    y[i] = mx + std::log(z);
  }
  check_finite(out, "logsumexp");
  if (tracking({&x})) {
    record(out, [x, out, r, c]() mutable {
      if (!out.has_grad()) return;
      auto dy = out.grad();
      auto lse = out.data();
      auto gx = x.mutable_grad();
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += dy[i] * std::exp(x[i * c + j] - lse[i]);
      }
    });
  }
  return out;
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::int32_t> targets,
                     std::int32_t ignore_index) {
  require_matrix(logits, "cross_entropy");
  const std::size_t r = logits.rows(), v = logits.cols();
  if (targets.size() != r) throw ShapeError("cross_entropy: one target per row required");
  std::vector<double> lse(r, 0.0);
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = logits.data().data() + i * v;
    const double mx = *std::max_element(row, row + v);
    double z = 0.0;
    for (std::size_t j = 0; j < v; ++j) z += std::exp(row[j] - mx);
    lse[i] = mx + std::log(z);
    if (targets[i] == ignore_index) continue;
    if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= v) {
      throw DataError("cross_entropy: target id out of range");
    }
    total += lse[i] - row[targets[i]];
    ++count;
  }
  if (count == 0) throw DataError("cross_entropy: every target is ignored");
  Tensor out = Tensor::scalar(total / static_cast<double>(count));
  check_finite(out, "cross_entropy");
  if (tracking({&logits})) {
    std::vector<std::int32_t> tgt(targets.begin(), targets.end());
    record(out, [logits, out, tgt, lse, ignore_index, count, r, v]() mutable {
      if (!out.has_grad()) return;
      const double g = out.grad()[0] / static_cast<double>(count);
      auto gl = logits.mutable_grad();
      for (std::size_t i = 0; i < r; ++i) {
        if (tgt[i] == ignore_index) continue;
        for (std::size_t j = 0; j < v; ++j) gl[i * v + j] += g * std::exp(logits[i * v + j] - lse[i]);
        gl[i * v + tgt[i]] -= g;
      }
    });
  }
  return out;
}

Tensor causal_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t batch,
                        std::size_t seq, std::size_t heads, std::vector<double>* probs) {
  require_matrix(q, "causal_attention");
  require_same_shape(q, k, "causal_attention");
  require_same_shape(q, v, "causal_attention");
  const std::size_t width = q.cols();
  if (q.rows() != batch * seq || heads == 0 || width % heads != 0) {
    throw ShapeError("causal_attention: layout does not match batch/seq/heads");
  }
  const std::size_t hd = width / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
  const auto T = Eigen::Index(seq), H = Eigen::Index(hd);
  const Eigen::OuterStride<> stride(static_cast<Eigen::Index>(width));

  std::vector<double> p_all(batch * heads * seq * seq, 0.0);
  Tensor out = Tensor::zeros(q.shape());
  RowMat scores(T, T);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t base = b * seq * width + h * hd;
      ConstStridedMap qb(q.data().data() + base, T, H, stride);
      ConstStridedMap kb(k.data().data() + base, T, H, stride);
      ConstStridedMap vb(v.data().data() + base, T, H, stride);
      MatMap p(p_all.data() + (b * heads + h) * seq * seq, T, T);
      scores.noalias() = (qb * kb.transpose()) * inv_sqrt;
      for (Eigen::Index i = 0; i < T; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j <= i; ++j) mx = std::max(mx, scores(i, j));
        double z = 0.0;
        for (Eigen::Index j = 0; j <= i; ++j) {
          p(i, j) = std::exp(scores(i, j) - mx);
          z += p(i, j);
        }
        for (Eigen::Index j = 0; j <= i; ++j) p(i, j) /= z;
      }
      StridedMap ob(out.mutable_data().data() + base, T, H, stride);
      ob.noalias() = p * vb;
    }
  }
  check_finite(out, "causal_attention");
  if (probs != nullptr) *probs = p_all;
  if (tracking({&q, &k, &v})) {
    record(out, [q, k, v, out, p_all = std::move(p_all), batch, heads, seq, width, hd,
                 inv_sqrt]() mutable {
      if (!out.has_grad()) return;
      const auto T = Eigen::Index(seq), H = Eigen::Index(hd);
      const Eigen::OuterStride<> stride(static_cast<Eigen::Index>(width));
      std::span<double> gq, gk, gv;
      if (q.requires_grad()) gq = q.mutable_grad();
      if (k.requires_grad()) gk = k.mutable_grad();
      if (v.requires_grad()) gv = v.mutable_grad();
      RowMat dp(T, T), ds(T, T);
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t h = 0; h < heads; ++h) {
          const std::size_t base = b * seq * width + h * hd;
          ConstStridedMap qb(q.data().data() + base, T, H, stride);
          ConstStridedMap kb(k.data().data() + base, T, H, stride);
          ConstStridedMap vb(v.data().data() + base, T, H, stride);
          ConstStridedMap dob(out.grad().data() + base, T, H, stride);
          ConstMatMap p(p_all.data() + (b * heads + h) * seq * seq, T, T);
          if (!gv.empty()) StridedMap(gv.data() + base, T, H, stride).noalias() += p.transpose() * dob;
          dp.noalias() = dob * vb.transpose();
          for (Eigen::Index i = 0; i < T; ++i) {
            double rowdot = 0.0;
            for (Eigen::Index j = 0; j <= i; ++j) rowdot += dp(i, j) * p(i, j);
            for (Eigen::Index j = 0; j < T; ++j) ds(i, j) = j <= i ? p(i, j) * (dp(i, j) - rowdot) : 0.0;
          }
          if (!gq.empty()) {
            StridedMap(gq.data() + base, T, H, stride).noalias() += (ds * kb) * inv_sqrt;
          }
          if (!gk.empty()) {
            StridedMap(gk.data() + base, T, H, stride).noalias() += (ds.transpose() * qb) * inv_sqrt;
          }
        }
      }
    });
  }
  return out;
}

namespace {

// Shared implementation of the two grouped reductions. index(i, t) yields the
// input column feeding output column i from member t of its group.
template <class IndexFn>
Tensor grouped_reduce(const Tensor& x, std::size_t out_cols, std::size_t members, Reduce mode,
                      IndexFn index, const char* op) {
  const std::size_t r = x.rows(), c = x.cols();
  Shape shape = x.rank() == 1 ? Shape{out_cols} : Shape{r, out_cols};
  Tensor out = Tensor::zeros(shape);
  auto y = out.mutable_data();
  std::vector<std::size_t> argmax(mode == Reduce::max ? r * out_cols : 0);
  for (std::size_t row = 0; row < r; ++row) {
    const double* xr = x.data().data() + row * c;
    for (std::size_t i = 0; i < out_cols; ++i) {
      if (mode == Reduce::sum) {
        double acc = 0.0;
        for (std::size_t t = 0; t < members; ++t) acc += xr[index(i, t)];
        y[row * out_cols + i] = acc;
      } else {
        std::size_t best = index(i, 0);
        for (std::size_t t = 1; t < members; ++t) {
          if (xr[index(i, t)] > xr[best]) best = index(i, t);
        }
        argmax[row * out_cols + i] = best;
        y[row * out_cols + i] = xr[best];
      }
    }
  }
  check_finite(out, op);
  if (tracking({&x})) {
    record(out, [x, out, argmax, r, c, out_cols, members, mode, index]() mutable {
      if (!out.has_grad()) return;
      auto dy = out.grad();
      auto gx = x.mutable_grad();
      for (std::size_t row = 0; row < r; ++row) {
        for (std::size_t i = 0; i < out_cols; ++i) {
          const double g = dy[row * out_cols + i];
          if (mode == Reduce::sum) {
            for (std::size_t t = 0; t < members; ++t) gx[row * c + index(i, t)] += g;
          } else {
            gx[row * c + argmax[row * out_cols + i]] += g;
          }
        }
      }
    });
  }
  return out;
}

}  // namespace

Tensor reduce_strided(const Tensor& x, std::size_t groups, Reduce mode) {
  if (x.rank() == 0 || groups == 0 || x.cols() % groups != 0) {
    throw ShapeError("reduce_strided: width " + std::to_string(x.cols()) + " not divisible into " +
                     std::to_string(groups) + " groups");
  }
  const std::size_t width = x.cols() / groups;
  return grouped_reduce(x, width, groups, mode,
                        [width](std::size_t i, std::size_t t) { return t * width + i; },
                        "reduce_strided");
}

Tensor reduce_blocks(const Tensor& x, std::size_t block, Reduce mode) {
  if (x.rank() == 0 || block == 0 || x.cols() % block != 0) {
    throw ShapeError("reduce_blocks: width " + std::to_string(x.cols()) +
                     " not divisible into blocks of " + std::to_string(block));
  }
  return grouped_reduce(x, x.cols() / block, block, mode,
                        [block](std::size_t i, std::size_t t) { return i * block + t; },
                        "reduce_blocks");
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("dot: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double l2_norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("cosine_similarity: length mismatch");
  const double sa = dot(a, a), sb = dot(b, b);
  if (sa == 0.0 || sb == 0.0) throw NumericError("cosine_similarity of a zero-norm vector");
  // sqrt(sa * sb) rather than |a| * |b|: in binary floating point
  // sqrt(x * x) == |x|, so identical vectors give exactly 1.
  return std::clamp(dot(a, b) / std::sqrt(sa * sb), -1.0, 1.0);
}

double cosine_similarity(const Tensor& a, const Tensor& b) { return cosine_similarity(a.data(), b.data()); }

}  // namespace mrf
