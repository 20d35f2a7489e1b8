#!/usr/bin/env python3
# Copyright 2026 The qrng-tunnel Authors.
# SPDX-License-Identifier: Apache-2.0
"""Regenerates e_1e6.bin: the first 10^6 bits of the binary expansion of e,
packed MSB-first without a header (the reference input used by the known
answer tests)."""
import sys

import mpmath

N = 1_000_000
mpmath.mp.prec = N + 64
bits = bin(int(mpmath.e * mpmath.mpf(2) ** (N - 2)))[2:][:N]
assert len(bits) == N
packed = int(bits, 2).to_bytes(N // 8, "big")
out = sys.argv[1] if len(sys.argv) > 1 else "e_1e6.bin"
with open(out, "wb") as f:
    f.write(packed)
