#include "cortical/numcore/kernels.hpp"

#if defined(__aarch64__) && defined(__ARM_NEON)
#include <arm_neon.h>

namespace cortical::kernels::neon {
namespace {

// vmlaq/vfmaq are avoided on purpose: a fused multiply-add would round once
// and diverge from the scalar kernels.

void axpy_f32(std::size_t n, float a, const float* x, float* y) {
  const float32x4_t va = vdupq_n_f32(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    vst1q_f32(y + i, vaddq_f32(vld1q_f32(y + i), vmulq_f32(va, vld1q_f32(x + i))));
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

void axpy_f64(std::size_t n, double a, const double* x, double* y) {
  const float64x2_t va = vdupq_n_f64(a);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    vst1q_f64(y + i, vaddq_f64(vld1q_f64(y + i), vmulq_f64(va, vld1q_f64(x + i))));
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

#define CORTICAL_NEON_BINARY(name, op32, op64, sop)                                   \
  void name##_f32(std::size_t n, const float* a, const float* b, float* out) {       \
    std::size_t i = 0;                                                                \
    for (; i + 4 <= n; i += 4) vst1q_f32(out + i, op32(vld1q_f32(a + i), vld1q_f32(b + i))); \
    for (; i < n; ++i) out[i] = a[i] sop b[i];                                        \
  }                                                                                   \
  void name##_f64(std::size_t n, const double* a, const double* b, double* out) {    \
    std::size_t i = 0;                                                                \
    for (; i + 2 <= n; i += 2) vst1q_f64(out + i, op64(vld1q_f64(a + i), vld1q_f64(b + i))); \
    for (; i < n; ++i) out[i] = a[i] sop b[i];                                        \
  }

CORTICAL_NEON_BINARY(add, vaddq_f32, vaddq_f64, +)
CORTICAL_NEON_BINARY(sub, vsubq_f32, vsubq_f64, -)
CORTICAL_NEON_BINARY(mul, vmulq_f32, vmulq_f64, *)
CORTICAL_NEON_BINARY(div, vdivq_f32, vdivq_f64, /)
#undef CORTICAL_NEON_BINARY

void scale_f32(std::size_t n, float a, const float* x, float* out) {
  const float32x4_t va = vdupq_n_f32(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) vst1q_f32(out + i, vmulq_f32(va, vld1q_f32(x + i)));
  for (; i < n; ++i) out[i] = a * x[i];
}

void scale_f64(std::size_t n, double a, const double* x, double* out) {
  const float64x2_t va = vdupq_n_f64(a);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vmulq_f64(va, vld1q_f64(x + i)));
  for (; i < n; ++i) out[i] = a * x[i];
}

void relu_f32(std::size_t n, const float* x, float* out) {
  const float32x4_t z = vdupq_n_f32(0.0f);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const float32x4_t v = vld1q_f32(x + i);
    const uint32x4_t m = vcgtq_f32(v, z);
    vst1q_f32(out + i, vreinterpretq_f32_u32(vandq_u32(m, vreinterpretq_u32_f32(v))));
  }
  for (; i < n; ++i) out[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_f64(std::size_t n, const double* x, double* out) {
  const float64x2_t z = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t v = vld1q_f64(x + i);
    const uint64x2_t m = vcgtq_f64(v, z);
    vst1q_f64(out + i, vreinterpretq_f64_u64(vandq_u64(m, vreinterpretq_u64_f64(v))));
  }
  for (; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_grad_f32(std::size_t n, const float* x, const float* g, float* out) {
  const float32x4_t z = vdupq_n_f32(0.0f);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const uint32x4_t m = vcgtq_f32(vld1q_f32(x + i), z);
    vst1q_f32(out + i, vreinterpretq_f32_u32(vandq_u32(m, vreinterpretq_u32_f32(vld1q_f32(g + i)))));
  }
  for (; i < n; ++i) out[i] = x[i] > 0.0f ? g[i] : 0.0f;
}

void relu_grad_f64(std::size_t n, const double* x, const double* g, double* out) {
  const float64x2_t z = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const uint64x2_t m = vcgtq_f64(vld1q_f64(x + i), z);
    vst1q_f64(out + i, vreinterpretq_f64_u64(vandq_u64(m, vreinterpretq_u64_f64(vld1q_f64(g + i)))));
  }
  for (; i < n; ++i) out[i] = x[i] > 0.0 ? g[i] : 0.0;
}

constexpr KernelTable<float> kF32{axpy_f32, add_f32, sub_f32, mul_f32, div_f32,
                                  scale_f32, relu_f32, relu_grad_f32};
constexpr KernelTable<double> kF64{axpy_f64, add_f64, sub_f64, mul_f64, div_f64,
                                   scale_f64, relu_f64, relu_grad_f64};

}  // namespace

template <>
const KernelTable<float>* table<float>() {
  return &kF32;
}
template <>
const KernelTable<double>* table<double>() {
  return &kF64;
}

}  // namespace cortical::kernels::neon

#else

namespace cortical::kernels::neon {
template <>
const KernelTable<float>* table<float>() {
  return nullptr;
}
template <>
const KernelTable<double>* table<double>() {
  return nullptr;
}
}  // namespace cortical::kernels::neon

#endif
