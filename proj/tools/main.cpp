// SPDX-License-Identifier: Apache-2.0
#include "mask3d/cli.hpp"

int main(int argc, char** argv) { return mask3d::run_cli(argc, argv); }
