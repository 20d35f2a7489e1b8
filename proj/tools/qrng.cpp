// Copyright 2026 The qrng-tunnel Authors.
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "qrng/commands.hpp"

int main(int argc, char** argv) { return qrng::run_cli(argc, argv, std::cout, std::cerr); }
