#pragma once

#include <cstddef>
#include <cstdint>
#include <concepts>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "mmctr/error.hpp"

namespace mmctr {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

/// Accumulator for reductions: at least double, wider when T is.
template <typename T>
using Accum = std::conditional_t<(sizeof(T) > sizeof(double)), T, double>;

/// Dense row-major array with an optional gradient buffer.
///
/// A tensor is a shared handle: copies alias the same storage, which is what
/// lets recorded backward rules write into the gradients of their inputs.
/// Use clone() for an independent copy.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;

  explicit BasicTensor(Shape shape) : BasicTensor(std::move(shape), false) {}

  // A template so that a braced value list such as Tensor({1}, {x}) can
  // never bind to the flag.
  template <typename Flag>
    requires std::same_as<Flag, bool>
  BasicTensor(Shape shape, Flag requires_grad)
      : impl_(std::make_shared<Impl>()) {
    for (auto d : shape) {
      if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape));
    }
    impl_->data.assign(shape_numel(shape), T{0});
    impl_->shape = std::move(shape);
    impl_->requires_grad = requires_grad;
  }

  BasicTensor(Shape shape, std::vector<T> values, bool requires_grad = false)
      : BasicTensor(std::move(shape), requires_grad) {
    if (values.size() != impl_->data.size()) {
      throw DimensionError("tensor of shape " + shape_str(impl_->shape) + " needs " +
                           std::to_string(impl_->data.size()) + " values, got " +
                           std::to_string(values.size()));
    }
    impl_->data = std::move(values);
  }

  static BasicTensor scalar(T value, bool requires_grad = false) {
    return BasicTensor(Shape{1}, std::vector<T>{value}, requires_grad);
  }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t i) const { return impl_->shape.at(i); }
  std::size_t numel() const { return impl_ ? impl_->data.size() : 0; }

  /// Size of the trailing axis; every op treats tensors as rows() x cols().
  std::size_t cols() const { return impl_->shape.back(); }
  std::size_t rows() const { return numel() / cols(); }

  std::span<T> data() { return impl_->data; }
  std::span<const T> data() const { return impl_->data; }
  T& operator[](std::size_t i) { return impl_->data[i]; }
  const T& operator[](std::size_t i) const { return impl_->data[i]; }

  T item() const {
    if (numel() != 1) throw ContractError("item() on non-scalar tensor " + shape_str(shape()));
    return impl_->data[0];
  }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool on) { impl_->requires_grad = on; }

  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<T> grad() { return impl_->grad; }
  std::span<const T> grad() const { return impl_->grad; }

  /// Gradient buffer, zero-allocated on first use. Writable through const
  /// handles: backward rules hold const copies of their inputs.
  std::span<T> grad_buffer() const {
    if (impl_->grad.empty()) impl_->grad.assign(numel(), T{0});
    return impl_->grad;
  }

  void clear_grad() const { impl_->grad.clear(); }

  BasicTensor clone() const {
    return BasicTensor(shape(), std::vector<T>(data().begin(), data().end()), requires_grad());
  }

  /// Identity of the graph that produced this tensor, 0 for leaves.
  std::uint64_t producer() const { return impl_->producer; }
  void set_producer(std::uint64_t id) { impl_->producer = id; }

  bool same_storage(const BasicTensor& other) const { return impl_ == other.impl_; }

 private:
  struct Impl {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;
    bool requires_grad = false;
    std::uint64_t producer = 0;
  };

  std::shared_ptr<Impl> impl_;
};

using Tensor = BasicTensor<float>;

}  // namespace mmctr
