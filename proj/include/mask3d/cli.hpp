// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: gen, pretrain, probe, ablate, reconstruct, replay.
// Exit codes: 0 success, 2 bad arguments, 3 data error, 4 numeric failure.
#pragma once

#include <string>
#include <vector>

namespace mask3d {

inline constexpr int kExitOk = 0;
inline constexpr int kExitBadArgs = 2;
inline constexpr int kExitDataError = 3;
inline constexpr int kExitNumeric = 4;

int run_cli(int argc, char** argv);
/// Same as above without the program name.
int run_cli(const std::vector<std::string>& args);

}  // namespace mask3d
