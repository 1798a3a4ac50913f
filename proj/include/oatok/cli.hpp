// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

namespace oatok::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

/// Runs one `oatok` subcommand. args excludes the program name.
int cli_dispatch(const std::vector<std::string>& args);
int cli_dispatch(int argc, char** argv);

/// Build identifier recorded in every manifest.
std::string git_describe();

}  // namespace oatok::cli
