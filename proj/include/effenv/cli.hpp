// cli.hpp: command-line entry point (effenv attractor-map|relax|freeze|sweep|env-inspect)
//
// Exit codes: 0 success or pass, 1 usage/config error, 2 tolerance failure.

#pragma once

#include <ostream>

namespace effenv {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitTolerance = 2;

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace effenv
