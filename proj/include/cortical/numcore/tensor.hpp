#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <variant>
#include <vector>

#include "cortical/error.hpp"

namespace cortical {

using Shape = std::vector<std::size_t>;

enum class DType : std::uint8_t { f32, f64 };

std::string_view dtype_name(DType dtype);
DType parse_dtype(std::string_view name);
std::size_t dtype_size(DType dtype);

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename T>
constexpr DType dtype_of() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  return std::is_same_v<T, float> ? DType::f32 : DType::f64;
}

// Calls fn(std::type_identity<T>{}) with T matching the runtime dtype.
template <typename Fn>
decltype(auto) dispatch_dtype(DType dtype, Fn&& fn) {
  if (dtype == DType::f32) return fn(std::type_identity<float>{});
  return fn(std::type_identity<double>{});
}

// Dense row-major array of f32 or f64 scalars. A Tensor is a plain value:
// copies are deep and nothing aliases its buffer.
class Tensor {
 public:
  Tensor();
  explicit Tensor(Shape shape, DType dtype = DType::f64);

  static Tensor zeros(Shape shape, DType dtype = DType::f64);
  static Tensor full(Shape shape, double value, DType dtype = DType::f64);
  static Tensor scalar(double value, DType dtype = DType::f64);
  static Tensor from(Shape shape, std::span<const double> values,
                     DType dtype = DType::f64);
  static Tensor from(Shape shape, std::initializer_list<double> values,
                     DType dtype = DType::f64);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;
  DType dtype() const;

  bool requires_grad() const { return requires_grad_; }
  Tensor& set_requires_grad(bool value) {
    requires_grad_ = value;
    return *this;
  }

  template <typename T>
  std::span<const T> data() const {
    const auto* v = std::get_if<std::vector<T>>(&data_);
    if (v == nullptr) throw TypeError("tensor dtype mismatch on read");
    return {v->data(), v->size()};
  }

  template <typename T>
  std::span<T> data() {
    auto* v = std::get_if<std::vector<T>>(&data_);
    if (v == nullptr) throw TypeError("tensor dtype mismatch on write");
    return {v->data(), v->size()};
  }

  // Element access through double, independent of storage dtype.
  double get(std::size_t flat) const;
  void set(std::size_t flat, double value);
  double item() const;

  std::vector<double> values() const;
  Tensor astype(DType dtype) const;
  Tensor reshaped(Shape shape) const;

  bool all_finite() const;

  // Raw byte view used by serialization.
  std::span<const std::byte> bytes() const;
  std::span<std::byte> bytes();

 private:
  Shape shape_;
  std::variant<std::vector<float>, std::vector<double>> data_;
  bool requires_grad_ = false;
};

// True iff shape, dtype and every stored bit agree.
bool bit_equal(const Tensor& a, const Tensor& b);

// Largest absolute element-wise difference; shapes must agree.
double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace cortical
