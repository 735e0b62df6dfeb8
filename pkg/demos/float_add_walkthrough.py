"""
Floating-point add on a simulated SOT-MRAM subarray
===================================================

Every bit operation here is a read followed by a logic-in-write on real
(simulated) cells, and every micro-op lands in the subarray's event log.
"""

import numpy as np

from sotpim import FP32, encode_float, float_add, float_mul, new_subarray
from sotpim.arith import add_words
from sotpim.softfloat import ref_add

###############################################################################
# One add, one lane
# -----------------
# ``float_add`` places both operands in row 0 of a fresh lane, runs the
# exponent, alignment, mantissa and normalization phases, and reads the
# result back.

sa = new_subarray(FP32)
r = float_add(sa, encode_float(1.5), encode_float(-6.25))
print("1.5 + -6.25 =", r.value)

summary = sa.summarize_log()
print("reads, writes, searches:", summary.counts())
for phase, counts in summary.by_phase.items():
    print(f"  {phase:10s}", counts)

###############################################################################
# Results truncate toward zero
# ----------------------------
# 1/3 cannot be represented, so the product rounds down rather than to nearest.

third = encode_float(1 / 3)
print("1/3 * 3 =", float_mul(None, third, encode_float(3.0)).value)

###############################################################################
# Many lanes at once
# ------------------
# Lanes execute the same micro-op stream; here 4096 random pairs are added
# and compared against the integer-only reference model.

rng = np.random.default_rng(0)
a = (rng.integers(0x3F000000, 0x43000000, 4096)).astype(np.uint64)
b = (rng.integers(0xBF000000, 0xC3000000, 4096)).astype(np.uint64)
got, flags = add_words(a, b)
want = np.array([ref_add(int(x), int(y))[0] for x, y in zip(a, b)], dtype=np.uint64)
print("lanes matching the reference:", int(np.sum(got == want)), "/", len(a))
