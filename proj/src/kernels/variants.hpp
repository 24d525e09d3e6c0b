#pragma once

#include <cstddef>

namespace mstage::kernels::scalar {
double dot(const double* a, const double* b, std::size_t n);
double squared_distance(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
}  // namespace mstage::kernels::scalar

#if defined(MSTAGE_HAVE_AVX2)
namespace mstage::kernels::avx2 {
double dot(const double* a, const double* b, std::size_t n);
double squared_distance(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
}  // namespace mstage::kernels::avx2
#endif

#if defined(MSTAGE_HAVE_NEON)
namespace mstage::kernels::neon {
double dot(const double* a, const double* b, std::size_t n);
double squared_distance(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
}  // namespace mstage::kernels::neon
#endif
