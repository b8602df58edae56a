// Compiled with -mavx2 (and without -mfma) on x86-64 only; see CMakeLists.
#include "cortical/numcore/kernels.hpp"

#if defined(CORTICAL_HAVE_AVX2)
#include <immintrin.h>

namespace cortical::kernels::avx2 {
namespace {

template <typename T>
struct Lanes;

template <>
struct Lanes<float> {
  using V = __m256;
  static constexpr std::size_t width = 8;
  static V load(const float* p) { return _mm256_loadu_ps(p); }
  static void store(float* p, V v) { _mm256_storeu_ps(p, v); }
  static V set1(float a) { return _mm256_set1_ps(a); }
  static V zero() { return _mm256_setzero_ps(); }
  static V add(V a, V b) { return _mm256_add_ps(a, b); }
  static V sub(V a, V b) { return _mm256_sub_ps(a, b); }
  static V mul(V a, V b) { return _mm256_mul_ps(a, b); }
  static V div(V a, V b) { return _mm256_div_ps(a, b); }
  static V gt_mask(V a, V b) { return _mm256_cmp_ps(a, b, _CMP_GT_OQ); }
  static V band(V a, V b) { return _mm256_and_ps(a, b); }
};

template <>
struct Lanes<double> {
  using V = __m256d;
  static constexpr std::size_t width = 4;
  static V load(const double* p) { return _mm256_loadu_pd(p); }
  static void store(double* p, V v) { _mm256_storeu_pd(p, v); }
  static V set1(double a) { return _mm256_set1_pd(a); }
  static V zero() { return _mm256_setzero_pd(); }
  static V add(V a, V b) { return _mm256_add_pd(a, b); }
  static V sub(V a, V b) { return _mm256_sub_pd(a, b); }
  static V mul(V a, V b) { return _mm256_mul_pd(a, b); }
  static V div(V a, V b) { return _mm256_div_pd(a, b); }
  static V gt_mask(V a, V b) { return _mm256_cmp_pd(a, b, _CMP_GT_OQ); }
  static V band(V a, V b) { return _mm256_and_pd(a, b); }
};

template <typename T>
void axpy(std::size_t n, T a, const T* x, T* y) {
  using L = Lanes<T>;
  const auto va = L::set1(a);
  std::size_t i = 0;
  for (; i + 2 * L::width <= n; i += 2 * L::width) {
    auto y0 = L::add(L::load(y + i), L::mul(va, L::load(x + i)));
    auto y1 = L::add(L::load(y + i + L::width), L::mul(va, L::load(x + i + L::width)));
    L::store(y + i, y0);
    L::store(y + i + L::width, y1);
  }
  for (; i + L::width <= n; i += L::width) {
    L::store(y + i, L::add(L::load(y + i), L::mul(va, L::load(x + i))));
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

template <typename T, typename VecOp, typename ScalarOp>
void binary(std::size_t n, const T* a, const T* b, T* out, VecOp vop, ScalarOp sop) {
  using L = Lanes<T>;
  std::size_t i = 0;
  for (; i + L::width <= n; i += L::width) {
    L::store(out + i, vop(L::load(a + i), L::load(b + i)));
  }
  for (; i < n; ++i) out[i] = sop(a[i], b[i]);
}

template <typename T>
void add(std::size_t n, const T* a, const T* b, T* out) {
  binary(n, a, b, out, Lanes<T>::add, [](T x, T y) { return x + y; });
}

template <typename T>
void sub(std::size_t n, const T* a, const T* b, T* out) {
  binary(n, a, b, out, Lanes<T>::sub, [](T x, T y) { return x - y; });
}

template <typename T>
void mul(std::size_t n, const T* a, const T* b, T* out) {
  binary(n, a, b, out, Lanes<T>::mul, [](T x, T y) { return x * y; });
}

template <typename T>
void div(std::size_t n, const T* a, const T* b, T* out) {
  binary(n, a, b, out, Lanes<T>::div, [](T x, T y) { return x / y; });
}

template <typename T>
void scale(std::size_t n, T a, const T* x, T* out) {
  using L = Lanes<T>;
  const auto va = L::set1(a);
  std::size_t i = 0;
  for (; i + L::width <= n; i += L::width) L::store(out + i, L::mul(va, L::load(x + i)));
  for (; i < n; ++i) out[i] = a * x[i];
}

template <typename T>
void relu(std::size_t n, const T* x, T* out) {
  using L = Lanes<T>;
  const auto z = L::zero();
  std::size_t i = 0;
  for (; i + L::width <= n; i += L::width) {
    const auto v = L::load(x + i);
    L::store(out + i, L::band(L::gt_mask(v, z), v));
  }
  for (; i < n; ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
}

template <typename T>
void relu_grad(std::size_t n, const T* x, const T* g, T* out) {
  using L = Lanes<T>;
  const auto z = L::zero();
  std::size_t i = 0;
  for (; i + L::width <= n; i += L::width) {
    L::store(out + i, L::band(L::gt_mask(L::load(x + i), z), L::load(g + i)));
  }
  for (; i < n; ++i) out[i] = x[i] > T(0) ? g[i] : T(0);
}

template <typename T>
constexpr KernelTable<T> kTable{axpy<T>, add<T>, sub<T>, mul<T>, div<T>,
                                scale<T>, relu<T>, relu_grad<T>};

}  // namespace

template <>
const KernelTable<float>* table<float>() {
  return &kTable<float>;
}
template <>
const KernelTable<double>* table<double>() {
  return &kTable<double>;
}

}  // namespace cortical::kernels::avx2

#else

namespace cortical::kernels::avx2 {
template <>
const KernelTable<float>* table<float>() {
  return nullptr;
}
template <>
const KernelTable<double>* table<double>() {
  return nullptr;
}
}  // namespace cortical::kernels::avx2

#endif
