#include "mrf/numeric/tensor.hpp"

#include <cstring>
#include <sstream>

#include "mrf/error.hpp"
#include "mrf/numeric/rng.hpp"

namespace mrf {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {
void validate_shape(const Shape& shape) {
  for (std::size_t d : shape) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_to_string(shape));
  }
}
}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  validate_shape(shape);
  auto impl = std::make_shared<detail::TensorStorage>();
  impl->data.assign(shape_numel(shape), value);
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  validate_shape(shape);
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("shape " + shape_to_string(shape) + " does not match " +
                     std::to_string(values.size()) + " values");
  }
  auto impl = std::make_shared<detail::TensorStorage>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value) { return from({}, {value}); }

Tensor Tensor::randn(Shape shape, double stddev, Rng& rng, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (double& v : t.mutable_data()) v = stddev * rng.normal();
  return t;
}

Tensor Tensor::uniform(Shape shape, double lo, double hi, Rng& rng, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (double& v : t.mutable_data()) v = rng.uniform(lo, hi);
  return t;
}

void Tensor::throw_undefined() { throw StateError("use of an undefined tensor"); }

std::size_t Tensor::dim(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size()) throw ShapeError("axis out of range for " + shape_to_string(s));
  return s[axis];
}

std::size_t Tensor::rows() const {
  const Shape& s = shape();
  if (s.size() <= 1) return 1;
  if (s.size() == 2) return s[0];
  throw ShapeError("expected a matrix, got " + shape_to_string(s));
}

std::size_t Tensor::cols() const {
  const Shape& s = shape();
  if (s.empty()) return 1;
  if (s.size() == 1) return s[0];
  if (s.size() == 2) return s[1];
  throw ShapeError("expected a matrix, got " + shape_to_string(s));
}

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item() on tensor of shape " + shape_to_string(shape()));
  return data()[0];
}

double Tensor::at(std::size_t r, std::size_t c) const { return data()[r * cols() + c]; }

void Tensor::set_requires_grad(bool value) const { storage().requires_grad = value; }

std::span<double> Tensor::mutable_grad() const {
  auto& s = storage();
  if (s.grad.empty()) s.grad.assign(s.data.size(), 0.0);
  return s.grad;
}

void Tensor::zero_grad() const { storage().grad.clear(); }

void Tensor::accumulate_grad(std::span<const double> g) const {
  auto& s = storage();
  if (s.grad.empty() && g.size() == s.data.size()) {
    s.grad.assign(g.begin(), g.end());
    return;
  }
  auto dst = mutable_grad();
  if (g.size() != dst.size()) throw ShapeError("gradient size mismatch");
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
}

Tensor Tensor::clone() const {
  const auto& s = storage();
  return from(s.shape, s.data);
}

bool Tensor::bitwise_equal(const Tensor& other) const {
  if (shape() != other.shape()) return false;
  return std::memcmp(data().data(), other.data().data(), size() * sizeof(double)) == 0;
}

}  // namespace mrf
