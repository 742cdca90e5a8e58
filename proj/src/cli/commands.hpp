// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

namespace relgen::cli {

// Runs one subcommand. Exit codes: 0 success, 1 validation error (bad flags,
// bad inputs), 2 runtime failure.
int dispatch(const std::vector<std::string>& args);
int dispatch(int argc, const char* const* argv);

}  // namespace relgen::cli
