// Copyright 2026 The qrng-tunnel Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>

namespace qrng {

/// Entry point of the `qrng` tool. Returns the process exit code: 0 on
/// success, 2 for usage, configuration and I/O errors, 3 for data-quality
/// failures including a failed battery.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace qrng
