#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>

// Dense double-precision kernels behind the clustering and PCA inner loops.
// Each kernel has a scalar reference and vectorized variants; the variant is
// picked once at startup from CPU features and can be forced with the
// MSTAGE_SIMD environment variable (scalar|avx2|neon).

namespace mstage::kernels {

enum class Isa { scalar, avx2, neon };

std::string_view to_string(Isa isa);
std::optional<Isa> parse_isa(std::string_view text);

struct KernelTable {
  Isa isa;
  double (*dot)(const double* a, const double* b, std::size_t n);
  double (*squared_distance)(const double* a, const double* b, std::size_t n);
  /// y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
};

/// True when the variant was compiled in and the running CPU supports it.
bool available(Isa isa);

/// Throws std::invalid_argument when `isa` is not available.
const KernelTable& table(Isa isa);

const KernelTable& active();
/// Test hook; affects all subsequent calls through the free functions.
void set_active(Isa isa);

inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  return active().squared_distance(a.data(), b.data(), a.size());
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active().axpy(alpha, x.data(), y.data(), x.size());
}

}  // namespace mstage::kernels
