#pragma once

#include <iosfwd>

namespace pnerv {

inline constexpr int kExitOk = 0;
inline constexpr int kExitPipeline = 1;
inline constexpr int kExitUsage = 2;

/// Entry point of the `pnerv` tool. JSON results go to `out`; usage text and
/// structured error records go to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace pnerv
