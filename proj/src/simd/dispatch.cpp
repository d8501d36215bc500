#include <atomic>
#include <cstdlib>
#include <string>

#include "kernels_impl.hpp"
#include "phishtrain/error.hpp"
#include "phishtrain/simd/kernels.hpp"

namespace phishtrain::simd {

namespace {

constexpr KernelTable kScalarTable{detail::dot_scalar, detail::squared_norm_scalar,
                                   detail::dot_rows_scalar};
#if defined(PHISHTRAIN_HAVE_AVX2)
constexpr KernelTable kAvx2Table{detail::dot_avx2, detail::squared_norm_avx2, detail::dot_rows_avx2};
#endif
#if defined(PHISHTRAIN_HAVE_NEON)
constexpr KernelTable kNeonTable{detail::dot_neon, detail::squared_norm_neon, detail::dot_rows_neon};
#endif

Isa detect_best() {
  if (const char* env = std::getenv("PHISHTRAIN_SIMD"); env && std::string(env) == "scalar") {
    return Isa::kScalar;
  }
  if (isa_available(Isa::kAvx2)) return Isa::kAvx2;
  if (isa_available(Isa::kNeon)) return Isa::kNeon;
  return Isa::kScalar;
}

const KernelTable& table_unchecked(Isa isa) {
  switch (isa) {
#if defined(PHISHTRAIN_HAVE_AVX2)
    case Isa::kAvx2: return kAvx2Table;
#endif
#if defined(PHISHTRAIN_HAVE_NEON)
    case Isa::kNeon: return kNeonTable;
#endif
    default: return kScalarTable;
  }
}

struct Active {
  std::atomic<Isa> isa;
  std::atomic<const KernelTable*> table;
};

Active& active() {
  static Active state{detect_best(), nullptr};
  static const bool init = (state.table.store(&table_unchecked(state.isa.load())), true);
  (void)init;
  return state;
}

const KernelTable& current() { return *active().table.load(std::memory_order_relaxed); }

}  // namespace

std::string_view to_string(Isa isa) {
  switch (isa) {
    case Isa::kScalar: return "scalar";
    case Isa::kAvx2: return "avx2";
    case Isa::kNeon: return "neon";
  }
  return "unknown";
}

bool isa_available(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return true;
    case Isa::kAvx2:
#if defined(PHISHTRAIN_HAVE_AVX2)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Isa::kNeon:
#if defined(PHISHTRAIN_HAVE_NEON)
      return true;
#else
      return false;
#endif
  }
  return false;
}

const KernelTable& kernels_for(Isa isa) {
  if (!isa_available(isa)) {
    throw Error(ErrorCode::kInvalidArgument,
                "SIMD variant '" + std::string(to_string(isa)) + "' is not available on this CPU");
  }
  return table_unchecked(isa);
}

Isa active_isa() { return active().isa.load(std::memory_order_relaxed); }

void set_active_isa(Isa isa) {
  const KernelTable& table = kernels_for(isa);
  active().table.store(&table, std::memory_order_relaxed);
  active().isa.store(isa, std::memory_order_relaxed);
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorCode::kDimMismatch, "dot: length mismatch");
  return current().dot(a.data(), b.data(), a.size());
}

double squared_norm(std::span<const double> a) {
  return current().squared_norm(a.data(), a.size());
}

void dot_rows(std::span<const double> query, std::span<const double> rows, std::span<double> out) {
  const std::size_t dim = query.size();
  if (dim == 0 || rows.size() != out.size() * dim) {
    throw Error(ErrorCode::kDimMismatch, "dot_rows: rows are not an out.size() x dim matrix");
  }
  current().dot_rows(query.data(), rows.data(), out.size(), dim, out.data());
}

}  // namespace phishtrain::simd
