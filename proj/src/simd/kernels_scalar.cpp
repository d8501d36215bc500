#include "kernels_impl.hpp"

namespace phishtrain::simd::detail {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += a[i] * b[i];
  return sum;
}

double squared_norm_scalar(const double* a, std::size_t n) { return dot_scalar(a, a, n); }

void dot_rows_scalar(const double* q, const double* rows, std::size_t n_rows, std::size_t dim,
                     double* out) {
  for (std::size_t r = 0; r < n_rows; ++r) out[r] = dot_scalar(q, rows + r * dim, dim);
}

}  // namespace phishtrain::simd::detail
