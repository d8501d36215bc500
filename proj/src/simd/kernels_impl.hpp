#pragma once

#include <cstddef>

namespace phishtrain::simd::detail {

double dot_scalar(const double* a, const double* b, std::size_t n);
double squared_norm_scalar(const double* a, std::size_t n);
void dot_rows_scalar(const double* q, const double* rows, std::size_t n_rows, std::size_t dim,
                     double* out);

#if defined(PHISHTRAIN_HAVE_AVX2)
double dot_avx2(const double* a, const double* b, std::size_t n);
double squared_norm_avx2(const double* a, std::size_t n);
void dot_rows_avx2(const double* q, const double* rows, std::size_t n_rows, std::size_t dim,
                   double* out);
#endif

#if defined(PHISHTRAIN_HAVE_NEON)
double dot_neon(const double* a, const double* b, std::size_t n);
double squared_norm_neon(const double* a, std::size_t n);
void dot_rows_neon(const double* q, const double* rows, std::size_t n_rows, std::size_t dim,
                   double* out);
#endif

}  // namespace phishtrain::simd::detail
