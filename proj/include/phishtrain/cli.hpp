#pragma once

#include <iosfwd>

namespace phishtrain::cli {

/// Exit codes: 0 success (and --help), 1 runtime failure, 2 usage error
/// (unknown flag, missing or unreadable input, invalid value).
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Entry point of the `phishtrain` binary. Every flag has an environment
/// override named PHISHTRAIN_<FLAG> (upper case, dashes as underscores).
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace phishtrain::cli
