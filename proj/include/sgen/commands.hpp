#pragma once

#include <ostream>

namespace sgen {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Entry point of the `sgen` tool. Subcommands: train, eval, restore, degrade,
/// gates, ablate. Returns 0 on success, 2 on usage/config errors and 1 on
/// runtime failures.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace sgen
