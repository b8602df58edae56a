#pragma once

// Inner-loop arithmetic kernels with a scalar reference implementation and
// SIMD variants (AVX2 on x86-64, NEON on aarch64) selected at runtime.
//
// Every SIMD kernel vectorizes across independent output elements and uses
// separate multiply and add instructions, so each output is computed with
// exactly the same rounding sequence as the scalar kernel. The variants are
// bit-identical, which keeps training deterministic across ISAs.

#include <cstddef>
#include <string_view>

namespace cortical::kernels {

enum class Isa { scalar, avx2, neon };

std::string_view isa_name(Isa isa);

template <typename T>
struct KernelTable {
  // y[i] += a * x[i]
  void (*axpy)(std::size_t n, T a, const T* x, T* y);
  // out[i] = a[i] (op) b[i]; out may alias a or b.
  void (*add)(std::size_t n, const T* a, const T* b, T* out);
  void (*sub)(std::size_t n, const T* a, const T* b, T* out);
  void (*mul)(std::size_t n, const T* a, const T* b, T* out);
  void (*div)(std::size_t n, const T* a, const T* b, T* out);
  // out[i] = a * x[i]
  void (*scale)(std::size_t n, T a, const T* x, T* out);
  // out[i] = x[i] > 0 ? x[i] : 0
  void (*relu)(std::size_t n, const T* x, T* out);
  // out[i] = x[i] > 0 ? g[i] : 0
  void (*relu_grad)(std::size_t n, const T* x, const T* g, T* out);
};

bool isa_available(Isa isa);

// Best ISA on this machine, unless CORTICAL_SIMD=scalar|avx2|neon overrides.
Isa detect_isa();

// Currently active ISA (initialized from detect_isa()).
Isa active_isa();

// Switches the active table; throws std::invalid_argument if unsupported.
void set_active_isa(Isa isa);

template <typename T>
const KernelTable<T>& table(Isa isa);

template <typename T>
const KernelTable<T>& active() {
  return table<T>(active_isa());
}

// Per-ISA tables, defined in the variant translation units.
namespace scalar {
template <typename T>
const KernelTable<T>& table();
}
namespace avx2 {
template <typename T>
const KernelTable<T>* table();  // nullptr when not compiled in
}
namespace neon {
template <typename T>
const KernelTable<T>* table();
}

}  // namespace cortical::kernels
