#include "cortical/numcore/kernels.hpp"

namespace cortical::kernels::scalar {
namespace {

template <typename T>
void axpy(std::size_t n, T a, const T* x, T* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

template <typename T>
void add(std::size_t n, const T* a, const T* b, T* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

template <typename T>
void sub(std::size_t n, const T* a, const T* b, T* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

template <typename T>
void mul(std::size_t n, const T* a, const T* b, T* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

template <typename T>
void div(std::size_t n, const T* a, const T* b, T* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] / b[i];
}

template <typename T>
void scale(std::size_t n, T a, const T* x, T* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a * x[i];
}

template <typename T>
void relu(std::size_t n, const T* x, T* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
}

template <typename T>
void relu_grad(std::size_t n, const T* x, const T* g, T* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > T(0) ? g[i] : T(0);
}

template <typename T>
constexpr KernelTable<T> kTable{axpy<T>, add<T>, sub<T>, mul<T>, div<T>,
                                scale<T>, relu<T>, relu_grad<T>};

}  // namespace

template <>
const KernelTable<float>& table<float>() {
  return kTable<float>;
}
template <>
const KernelTable<double>& table<double>() {
  return kTable<double>;
}

}  // namespace cortical::kernels::scalar
