#include "cortical/numcore/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace cortical::kernels {
namespace {

bool cpu_has_avx2() {
#if defined(CORTICAL_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

std::atomic<Isa>& active_slot() {
  static std::atomic<Isa> slot{detect_isa()};
  return slot;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
    case Isa::neon: return "neon";
  }
  return "unknown";
}

bool isa_available(Isa isa) {
  switch (isa) {
    case Isa::scalar: return true;
    case Isa::avx2: return avx2::table<float>() != nullptr && cpu_has_avx2();
    case Isa::neon: return neon::table<float>() != nullptr;
  }
  return false;
}

Isa detect_isa() {
  if (const char* env = std::getenv("CORTICAL_SIMD")) {
    const std::string want(env);
    for (Isa isa : {Isa::scalar, Isa::avx2, Isa::neon}) {
      if (want == isa_name(isa) && isa_available(isa)) return isa;
    }
  }
  if (isa_available(Isa::avx2)) return Isa::avx2;
  if (isa_available(Isa::neon)) return Isa::neon;
  return Isa::scalar;
}

Isa active_isa() { return active_slot().load(std::memory_order_relaxed); }

void set_active_isa(Isa isa) {
  if (!isa_available(isa)) {
    throw std::invalid_argument("ISA " + std::string(isa_name(isa)) + " not available");
  }
  active_slot().store(isa, std::memory_order_relaxed);
}

template <typename T>
const KernelTable<T>& table(Isa isa) {
  switch (isa) {
    case Isa::avx2:
      if (const auto* t = avx2::table<T>(); t != nullptr && isa_available(Isa::avx2)) return *t;
      break;
    case Isa::neon:
      if (const auto* t = neon::table<T>()) return *t;
      break;
    case Isa::scalar:
      break;
  }
  return scalar::table<T>();
}

template const KernelTable<float>& table<float>(Isa);
template const KernelTable<double>& table<double>(Isa);

}  // namespace cortical::kernels
