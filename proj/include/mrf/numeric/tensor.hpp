#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mrf {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

class Rng;

namespace detail {
struct TensorStorage {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a gradient is accumulated
  bool requires_grad = false;
};
}  // namespace detail

// Dense row-major tensor of doubles.
//
// Tensor is a handle: copies share the same storage, like a framework tensor.
// Use clone() for an independent deep copy. Data is treated as immutable once
// an operation has consumed it; the only sanctioned in-place writes are
// parameter updates between optimizer steps.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value);
  static Tensor randn(Shape shape, double stddev, Rng& rng, bool requires_grad = false);
  static Tensor uniform(Shape shape, double lo, double hi, Rng& rng, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return storage().shape; }
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const { return storage().data.size(); }

  // Rows/cols of a matrix view: rank-1 tensors are a single row, scalars 1x1.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const { return storage().data; }
  std::span<double> mutable_data() { return storage().data; }
  double item() const;
  double operator[](std::size_t i) const { return data()[i]; }
  double at(std::size_t r, std::size_t c) const;

  bool requires_grad() const { return storage().requires_grad; }
  void set_requires_grad(bool value) const;

  bool has_grad() const { return !storage().grad.empty(); }
  std::span<const double> grad() const { return storage().grad; }
  // Gradient buffers are side-state of the shared storage, so these are
  // usable through const handles (adjoint closures hold const copies).
  std::span<double> mutable_grad() const;  // allocates zeros on first use
  void zero_grad() const;
  void accumulate_grad(std::span<const double> g) const;

  // Deep copy of shape and data; the copy carries no gradient and is not
  // tracked by any tape.
  Tensor clone() const;
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }
  bool bitwise_equal(const Tensor& other) const;

 private:
  explicit Tensor(std::shared_ptr<detail::TensorStorage> impl) : impl_(std::move(impl)) {}
  detail::TensorStorage& storage() const {
    if (!impl_) [[unlikely]] throw_undefined();
    return *impl_;
  }
  [[noreturn]] static void throw_undefined();

  std::shared_ptr<detail::TensorStorage> impl_;
};

}  // namespace mrf
