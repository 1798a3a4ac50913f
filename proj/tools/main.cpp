// SPDX-License-Identifier: Apache-2.0
#include "oatok/cli.hpp"

int main(int argc, char** argv) { return oatok::cli::cli_dispatch(argc, argv); }
