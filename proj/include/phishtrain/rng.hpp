#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace phishtrain {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer. Used to derive decorrelated child seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives a child seed from a parent seed and a path of stream labels.
std::uint64_t derive_seed(std::uint64_t parent, std::initializer_list<std::uint64_t> path);

/// Uniform index in [0, n). Unlike std::uniform_int_distribution the result
/// is identical across standard library implementations.
std::size_t uniform_index(Rng& rng, std::size_t n);

/// Uniform double in [0, 1) from the top 53 bits.
double uniform_unit(Rng& rng);

/// Standard normal draw (Marsaglia polar method), portable across libraries.
double standard_normal(Rng& rng);

}  // namespace phishtrain
