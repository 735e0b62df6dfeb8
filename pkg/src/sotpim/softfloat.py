"""Reference soft-float model used as the oracle for the in-memory procedures.

Numbers are plain integers holding ``sign | exponent | fraction`` bit fields.
Only normalized values and a unique zero exist: no subnormals, infinities or
NaNs. The all-ones exponent is reserved, so every finite result has the same
encoding as IEEE 754 for the same widths. Results are truncated toward zero.
Overflow saturates to the largest finite magnitude and underflow flushes to a
signed zero; both raise a flag.
"""

import math
from dataclasses import dataclass
from enum import IntFlag

import numpy as np


class Flags(IntFlag):
    NONE = 0
    OVERFLOW = 1
    UNDERFLOW = 2


@dataclass(frozen=True)
class FloatLayout:
    n_e: int
    n_m: int
    bias: int = None
    rounding: str = "truncate"

    def __post_init__(self):
        if self.n_e < 2 or self.n_m < 1:
            raise ValueError(f"need n_e >= 2 and n_m >= 1, got ({self.n_e}, {self.n_m})")
        if self.rounding != "truncate":
            raise ValueError("only truncation toward zero is supported")
        if self.bias is None:
            object.__setattr__(self, "bias", (1 << (self.n_e - 1)) - 1)

    @property
    def width(self):
        return 1 + self.n_e + self.n_m

    @property
    def frac_mask(self):
        return (1 << self.n_m) - 1

    @property
    def exp_max(self):
        """Largest exponent field of a finite value."""
        return (1 << self.n_e) - 2

    @property
    def max_finite(self):
        return (self.exp_max << self.n_m) | self.frac_mask

    def unpack(self, bits):
        return (bits >> (self.n_e + self.n_m)) & 1, (bits >> self.n_m) & ((1 << self.n_e) - 1), bits & self.frac_mask

    def pack(self, sign, exp, frac):
        return (sign << (self.n_e + self.n_m)) | (exp << self.n_m) | frac

    def significand(self, bits):
        """Fraction with the hidden bit materialized (0 for the zero encoding)."""
        _, e, f = self.unpack(bits)
        return ((1 << self.n_m) | f) if e else 0


FP32 = FloatLayout(8, 23)


def encode(value, layout=FP32):
    """Encode a real number; returns ``(bits, flags)``. Inexact values truncate."""
    value = float(value)
    if math.isnan(value) or math.isinf(value):
        raise ValueError(f"{value} is not representable (no NaN/infinity support)")
    sign = 1 if math.copysign(1.0, value) < 0 else 0
    if value == 0.0:
        return layout.pack(sign, 0, 0), Flags.NONE
    m, e = math.frexp(abs(value))  # abs(value) = m * 2**e, m in [0.5, 1)
    exp = e - 1 + layout.bias
    frac = int(math.ldexp(m, layout.n_m + 1)) & layout.frac_mask
    return _finish(sign, exp, frac, layout)


def decode(bits, layout=FP32):
    sign, exp, frac = layout.unpack(bits)
    if exp == 0:
        return -0.0 if sign else 0.0
    mag = math.ldexp((1 << layout.n_m) | frac, exp - layout.bias - layout.n_m)
    return -mag if sign else mag


def _finish(sign, exp, frac, layout):
    if exp > layout.exp_max:
        return layout.pack(sign, 0, 0) | layout.max_finite, Flags.OVERFLOW
    if exp <= 0:
        return layout.pack(sign, 0, 0), Flags.UNDERFLOW
    return layout.pack(sign, exp, frac), Flags.NONE


def ref_add(a, b, layout=FP32):
    sa, ea, _ = layout.unpack(a)
    sb, eb, _ = layout.unpack(b)
    ma, mb = layout.significand(a), layout.significand(b)
    # exponent ties make b the larger operand
    if ea > eb:
        s_big, e_big, big, small, shift = sa, ea, ma, mb, ea - eb
    else:
        s_big, e_big, big, small, shift = sb, eb, mb, ma, eb - ea
    x = big << 1  # one guard bit below the significand
    y = (small << 1) >> shift
    r = x - y if sa != sb else x + y
    sign = s_big
    if r < 0:
        r, sign = -r, sign ^ 1
    if r == 0:
        return 0, Flags.NONE
    lead = r.bit_length() - 1
    n_m = layout.n_m
    frac = (r >> (lead - n_m) if lead >= n_m else r << (n_m - lead)) & layout.frac_mask
    return _finish(sign, e_big + lead - (n_m + 1), frac, layout)


def ref_mul(a, b, layout=FP32):
    sa, ea, _ = layout.unpack(a)
    sb, eb, _ = layout.unpack(b)
    sign = sa ^ sb
    if ea == 0 or eb == 0:
        return layout.pack(sign, 0, 0), Flags.NONE
    n = layout.n_m + 1
    p = layout.significand(a) * layout.significand(b)
    top = p >> (2 * n - 1)
    frac = (p >> (n - 1 + top)) & layout.frac_mask
    return _finish(sign, ea + eb - layout.bias + top, frac, layout)


def ref_mac(acc, x, w, layout=FP32):
    prod, f1 = ref_mul(x, w, layout)
    out, f2 = ref_add(acc, prod, layout)
    return out, f1 | f2


# -- round-to-nearest cross-check (binary32 only) -------------------------------


def f32_bits(value):
    return int(np.array(value, dtype=np.float32).view(np.uint32))


def f32_value(bits):
    return np.array(bits, dtype=np.uint32).view(np.float32)[()]


def ulp_distance32(a_bits, b_bits):
    """Number of binary32 values between two encodings (signed zeros equal)."""

    def ordered(b):
        mag = b & 0x7FFFFFFF
        return -mag if b >> 31 else mag

    return abs(ordered(a_bits) - ordered(b_bits))


def random_words(rng, n, layout=FP32, spread=20, zero_frac=0.02):
    """``n`` random encodings with exponents within ``spread`` of the bias
    (clipped to the finite range) and a ``zero_frac`` share of signed zeros."""
    sign = rng.integers(0, 2, n, dtype=np.uint64)
    exp = np.clip(rng.integers(layout.bias - spread, layout.bias + spread + 1, n), 1,
                  layout.exp_max).astype(np.uint64)
    exp[rng.random(n) < zero_frac] = 0
    frac = rng.integers(0, 1 << layout.n_m, n, dtype=np.uint64)
    frac[exp == 0] = 0
    return ((sign << np.uint64(layout.n_e + layout.n_m)) | (exp << np.uint64(layout.n_m))
            | frac)
