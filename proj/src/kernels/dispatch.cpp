#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "mstage/kernels.hpp"
#include "variants.hpp"

namespace mstage::kernels {

namespace {

constexpr KernelTable kScalar{Isa::scalar, &scalar::dot, &scalar::squared_distance,
                              &scalar::axpy};
#if defined(MSTAGE_HAVE_AVX2)
constexpr KernelTable kAvx2{Isa::avx2, &avx2::dot, &avx2::squared_distance, &avx2::axpy};
#endif
#if defined(MSTAGE_HAVE_NEON)
constexpr KernelTable kNeon{Isa::neon, &neon::dot, &neon::squared_distance, &neon::axpy};
#endif

const KernelTable* detect() {
  if (const char* forced = std::getenv("MSTAGE_SIMD")) {
    if (auto isa = parse_isa(forced); isa && available(*isa)) return &table(*isa);
  }
  if (available(Isa::avx2)) return &table(Isa::avx2);
  if (available(Isa::neon)) return &table(Isa::neon);
  return &kScalar;
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> ptr{detect()};
  return ptr;
}

}  // namespace

std::string_view to_string(Isa isa) {
  switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
    case Isa::neon: return "neon";
  }
  return "scalar";
}

std::optional<Isa> parse_isa(std::string_view text) {
  if (text == "scalar") return Isa::scalar;
  if (text == "avx2") return Isa::avx2;
  if (text == "neon") return Isa::neon;
  return std::nullopt;
}

bool available(Isa isa) {
  switch (isa) {
    case Isa::scalar: return true;
    case Isa::avx2:
#if defined(MSTAGE_HAVE_AVX2)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Isa::neon:
#if defined(MSTAGE_HAVE_NEON)
      return true;
#else
      return false;
#endif
  }
  return false;
}

const KernelTable& table(Isa isa) {
  if (!available(isa)) {
    throw std::invalid_argument("kernel variant not available: " + std::string(to_string(isa)));
  }
  switch (isa) {
#if defined(MSTAGE_HAVE_AVX2)
    case Isa::avx2: return kAvx2;
#endif
#if defined(MSTAGE_HAVE_NEON)
    case Isa::neon: return kNeon;
#endif
    default: return kScalar;
  }
}

const KernelTable& active() { return *current().load(std::memory_order_acquire); }

void set_active(Isa isa) { current().store(&table(isa), std::memory_order_release); }

}  // namespace mstage::kernels
