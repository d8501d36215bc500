#include "phishtrain/rng.hpp"

#include <cmath>

#include "phishtrain/error.hpp"

namespace phishtrain {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kShapeMismatch: return "shape_mismatch";
    case ErrorCode::kNonCausalProbe: return "non_causal_probe";
    case ErrorCode::kEmptySet: return "empty_set";
    case ErrorCode::kNoUnseenEmails: return "no_unseen_emails";
    case ErrorCode::kMissingEmbedding: return "missing_embedding";
    case ErrorCode::kDimMismatch: return "dim_mismatch";
    case ErrorCode::kZeroVector: return "zero_vector";
    case ErrorCode::kDuplicateId: return "duplicate_id";
    case ErrorCode::kMalformedRecord: return "malformed_record";
    case ErrorCode::kValidation: return "validation";
    case ErrorCode::kInsufficientEmails: return "insufficient_emails";
    case ErrorCode::kMissingBlock: return "missing_block";
    case ErrorCode::kDegenerate: return "degenerate";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kAuth: return "auth";
    case ErrorCode::kTransient: return "transient";
    case ErrorCode::kNotFound: return "not_found";
    case ErrorCode::kConflict: return "conflict";
    case ErrorCode::kSessionComplete: return "session_complete";
    case ErrorCode::kSessionIncomplete: return "session_incomplete";
    case ErrorCode::kOutOfRange: return "out_of_range";
  }
  return "unknown";
}

std::uint64_t derive_seed(std::uint64_t parent, std::initializer_list<std::uint64_t> path) {
  std::uint64_t s = mix_seed(parent);
  for (std::uint64_t label : path) s = mix_seed(s ^ mix_seed(label + 0x632be59bd9b4e019ULL));
  return s;
}

std::size_t uniform_index(Rng& rng, std::size_t n) {
  if (n == 0) throw Error(ErrorCode::kEmptySet, "uniform_index over an empty range");
  const std::uint64_t bound = n;
  // Rejection sampling removes modulo bias.
  const std::uint64_t limit = Rng::max() - (Rng::max() % bound + 1) % bound;
  std::uint64_t x;
  do {
    x = rng();
  } while (x > limit);
  return static_cast<std::size_t>(x % bound);
}

double uniform_unit(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double standard_normal(Rng& rng) {
  double u, v, s;
  do {
    u = 2.0 * uniform_unit(rng) - 1.0;
    v = 2.0 * uniform_unit(rng) - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  return u * std::sqrt(-2.0 * std::log(s) / s);
}

}  // namespace phishtrain
