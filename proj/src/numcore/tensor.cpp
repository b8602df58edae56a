#include "cortical/numcore/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

namespace cortical {

std::string_view dtype_name(DType dtype) {
  return dtype == DType::f32 ? "f32" : "f64";
}

DType parse_dtype(std::string_view name) {
  if (name == "f32") return DType::f32;
  if (name == "f64") return DType::f64;
  throw FormatError("unknown dtype '" + std::string(name) + "'");
}

std::size_t dtype_size(DType dtype) {
  return dtype == DType::f32 ? sizeof(float) : sizeof(double);
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i != 0) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor() : shape_{0}, data_(std::vector<double>{}) {}

Tensor::Tensor(Shape shape, DType dtype) : shape_(std::move(shape)) {
  const std::size_t n = shape_numel(shape_);
  if (dtype == DType::f32) {
    data_ = std::vector<float>(n, 0.0f);
  } else {
    data_ = std::vector<double>(n, 0.0);
  }
}

Tensor Tensor::zeros(Shape shape, DType dtype) {
  return Tensor(std::move(shape), dtype);
}

Tensor Tensor::full(Shape shape, double value, DType dtype) {
  Tensor t(std::move(shape), dtype);
  dispatch_dtype(dtype, [&]<typename T>(std::type_identity<T>) {
    auto d = t.data<T>();
    std::fill(d.begin(), d.end(), static_cast<T>(value));
  });
  return t;
}

Tensor Tensor::scalar(double value, DType dtype) {
  return full({}, value, dtype);
}

Tensor Tensor::from(Shape shape, std::span<const double> values, DType dtype) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("Tensor::from: " + std::to_string(values.size()) +
                     " values for shape " + shape_str(shape));
  }
  Tensor t(std::move(shape), dtype);
  dispatch_dtype(dtype, [&]<typename T>(std::type_identity<T>) {
    auto d = t.data<T>();
    for (std::size_t i = 0; i < values.size(); ++i) d[i] = static_cast<T>(values[i]);
  });
  return t;
}

Tensor Tensor::from(Shape shape, std::initializer_list<double> values, DType dtype) {
  return from(std::move(shape), std::span<const double>(values.begin(), values.size()), dtype);
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape_));
  }
  return shape_[axis];
}

std::size_t Tensor::numel() const {
  return std::visit([](const auto& v) { return v.size(); }, data_);
}

DType Tensor::dtype() const {
  return std::holds_alternative<std::vector<float>>(data_) ? DType::f32 : DType::f64;
}

double Tensor::get(std::size_t flat) const {
  return std::visit([&](const auto& v) { return static_cast<double>(v.at(flat)); }, data_);
}

void Tensor::set(std::size_t flat, double value) {
  std::visit(
      [&](auto& v) {
        using T = typename std::decay_t<decltype(v)>::value_type;
        v.at(flat) = static_cast<T>(value);
      },
      data_);
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape_));
  return get(0);
}

std::vector<double> Tensor::values() const {
  return std::visit(
      [](const auto& v) { return std::vector<double>(v.begin(), v.end()); }, data_);
}

Tensor Tensor::astype(DType dtype) const {
  if (dtype == this->dtype()) return *this;
  Tensor out = from(shape_, values(), dtype);
  out.requires_grad_ = requires_grad_;
  return out;
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != numel()) {
    throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  }
  Tensor out = *this;
  out.shape_ = std::move(shape);
  return out;
}

bool Tensor::all_finite() const {
  return std::visit(
      [](const auto& v) {
        return std::all_of(v.begin(), v.end(), [](auto x) { return std::isfinite(x); });
      },
      data_);
}

std::span<const std::byte> Tensor::bytes() const {
  return std::visit([](const auto& v) { return std::as_bytes(std::span(v)); }, data_);
}

std::span<std::byte> Tensor::bytes() {
  return std::visit([](auto& v) { return std::as_writable_bytes(std::span(v)); }, data_);
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape() || a.dtype() != b.dtype()) return false;
  const auto x = a.bytes();
  const auto y = b.bytes();
  return x.size() == y.size() && std::memcmp(x.data(), y.data(), x.size()) == 0;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.numel() != b.numel()) {
    throw ShapeError("max_abs_diff: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    worst = std::max(worst, std::abs(a.get(i) - b.get(i)));
  }
  return worst;
}

}  // namespace cortical
