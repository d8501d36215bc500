#pragma once

// Dense double-precision kernels behind the embedding similarity path.
// Every kernel has a scalar reference and, where the target supports it,
// a vectorized variant (AVX2+FMA on x86-64, NEON on AArch64). The variant is
// chosen once at runtime from CPU features; PHISHTRAIN_SIMD=scalar forces the
// reference path.

#include <cstddef>
#include <span>
#include <string_view>

namespace phishtrain::simd {

enum class Isa { kScalar, kAvx2, kNeon };

std::string_view to_string(Isa isa);

struct KernelTable {
  double (*dot)(const double* a, const double* b, std::size_t n);
  double (*squared_norm)(const double* a, std::size_t n);
  // out[r] = <query, rows[r * dim .. r * dim + dim)>
  void (*dot_rows)(const double* query, const double* rows, std::size_t n_rows, std::size_t dim,
                   double* out);
};

bool isa_available(Isa isa);

/// Kernel table for a specific ISA. Throws if the ISA is unavailable.
const KernelTable& kernels_for(Isa isa);

/// The ISA the dispatching entry points currently route to.
Isa active_isa();

/// Overrides dispatch (tests and benchmarks). Throws if unavailable.
void set_active_isa(Isa isa);

double dot(std::span<const double> a, std::span<const double> b);
double squared_norm(std::span<const double> a);
void dot_rows(std::span<const double> query, std::span<const double> rows, std::span<double> out);

}  // namespace phishtrain::simd
