"""Bit-level arithmetic procedures executed on a :class:`Subarray`.

Every value the procedures need is either sensed from cells or is a constant
driven on the read bit-line; every result bit is produced by a logic-in-write.
The controller only routes sensed bits between columns and turns sensed bits
or search match lines into per-lane write enables.

The full adder keeps its operands intact and works in four read-then-write
steps over four cells in one row, holding the roles (z, p, g, s)::

    1. p <- y,        g <- y
    2. p ^= x,        g &= x         p = x^y, g = xy
    3. s <- z,        z &= p         z = z(x^y)
    4. s ^= p,        g |= z         s = x^y^z, g = carry out

A ripple add reuses z, p and g for every bit (carry moves by swapping the z
and g roles) and writes bit i of the sum into its own cell.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .cell import LogicKind as K
from .softfloat import FP32, Flags, FloatLayout, decode, encode
from .subarray import Subarray, WordLoc, kind_codes

COPY, AND, OR, XOR = int(K.COPY), int(K.AND), int(K.OR), int(K.XOR)
_STEP2 = np.array([XOR, AND])
_STEP3 = np.array([COPY, AND])
_STEP4 = np.array([XOR, OR])


def _int_bits(value, width):
    return np.array([(value >> i) & 1 for i in range(width)], dtype=np.uint8)


def words_to_bits(words, width):
    words = np.asarray(words, dtype=np.uint64).reshape(-1, 1)
    return ((words >> np.arange(width, dtype=np.uint64)) & np.uint64(1)).astype(np.uint8)


def bits_to_words(bits):
    bits = np.asarray(bits, dtype=np.uint64)
    return (bits << np.arange(bits.shape[-1], dtype=np.uint64)).sum(axis=-1)


# -- full adder ---------------------------------------------------------------


def _ripple(sa, x_row, x_cols, y_row, y_cols, out_row, s_cols, cache, cin=0,
            cin_col=None, carry_col=None):
    """Lane-parallel ripple add of the words at (x_row, x_cols) and
    (y_row, y_cols) into (out_row, s_cols); ``cache`` holds the z, p, g
    columns in ``out_row``. ``cin`` is a constant carry-in, or None when
    z already holds it; ``cin_col`` instead takes it from ``y_row``. The
    last carry lands in ``carry_col`` if given, else in a cache cell.
    Returns the column holding the carry out."""
    n = len(x_cols)
    if len(y_cols) != n or len(s_cols) != n:
        raise ValueError("operand and sum widths differ")
    z, p, g = cache
    written = {(out_row, c) for c in (*s_cols, *cache)}
    if carry_col is not None:
        written.add((out_row, carry_col))
    inputs = {(x_row, c) for c in x_cols} | {(y_row, c) for c in y_cols}
    if len(written) != n + 3 + (carry_col is not None) or inputs & written:
        raise ValueError("overlapping full-adder cell placement")

    for i in range(n):
        gi = carry_col if (carry_col is not None and i == n - 1) else g
        if i == 0 and (cin is not None or cin_col is not None):
            if cin_col is None:
                yv = sa.sense(y_row, [y_cols[0]])
                sa.drive(out_row, [p, gi, z], COPY,
                         np.concatenate([yv, yv, np.full_like(yv, cin)], axis=1))
            else:
                yv = sa.sense(y_row, [y_cols[0], cin_col])
                sa.drive(out_row, [p, gi, z], COPY, yv[:, [0, 0, 1]])
        else:
            yv = sa.sense(y_row, [y_cols[i]])
            sa.drive(out_row, [p, gi], COPY, yv[:, [0, 0]])
        xv = sa.sense(x_row, [x_cols[i]])
        sa.drive(out_row, [p, gi], _STEP2, xv[:, [0, 0]])
        pz = sa.sense(out_row, [p, z])
        sa.drive(out_row, [s_cols[i], z], _STEP3, pz[:, [1, 0]])
        # p is unchanged by step 3, so the sense latch still holds it
        zv = sa.sense(out_row, [z])
        sa.drive(out_row, [s_cols[i], gi], _STEP4, np.concatenate([pz[:, :1], zv], axis=1))
        if gi == g:
            z, g = g, z
    return carry_col if carry_col is not None else z


@dataclass(frozen=True)
class FaLocs:
    """Cells for one full add. ``cache`` is four (row, col) cells in one row
    playing (carry-in z, x^y, carry-out, sum); x and y must lie outside it."""

    x: tuple
    y: tuple
    cache: tuple

    @property
    def z(self):
        return self.cache[0]

    @property
    def s(self):
        return self.cache[3]

    @property
    def z_out(self):
        return self.cache[2]


def full_add_1bit(sa, locs):
    """One full add; returns (sum, carry) sensed from lane 0."""
    cache = [tuple(c) for c in locs.cache]
    if len(cache) != 4 or len({r for r, _ in cache}) != 1:
        raise ValueError("full adder needs four cache cells in one row")
    cells = [tuple(locs.x), tuple(locs.y), *cache]
    if len(set(cells)) != len(cells):
        raise ValueError("overlapping full-adder cell placement")
    row = cache[0][0]
    z, p, g, s = (c for _, c in cache)
    _ripple(sa, locs.x[0], [locs.x[1]], locs.y[0], [locs.y[1]], row, [s], (z, p, g),
            cin=None)
    bits = sa.peek(row, [s, g])
    return int(bits[0, 0]), int(bits[0, 1])


def add_nbit(sa, x, y, out, cache=None):
    """Add the unsigned words at WordLocs ``x`` and ``y`` into ``out``
    (n + 1 columns, the last one receiving the carry). ``cache`` is three
    columns of ``out.row``; it defaults to the three columns after ``out``.
    Returns the sums as an array with one entry per lane."""
    n = len(x.cols)
    if n < 1 or len(y.cols) != n or len(out.cols) != n + 1:
        raise ValueError("add_nbit needs n-bit operands and an (n+1)-bit result")
    if cache is None:
        top = max(out.cols)
        cache = (top + 1, top + 2, top + 3)
    _ripple(sa, x.row, list(x.cols), y.row, list(y.cols), out.row, list(out.cols[:n]),
            tuple(cache), cin=0, carry_col=out.cols[n])
    return bits_to_words(sa.peek(out.row, list(out.cols)))


# -- floating point -----------------------------------------------------------


@dataclass(frozen=True)
class _Slot:
    frac: list
    exp: list
    sign: int

    @property
    def cols(self):
        return self.frac + self.exp + [self.sign]


class Frame:
    """Column/row map of one lane (8 rows) for a float layout.

    Row 0 holds word slots; rows 1-6 are working rows. Every row starts with a
    pool of cells that are never written and read as constant zeros.
    """

    rows = 8
    WORDS, EXP, MANT, YROW, RSUM, ACC2, ADJ = range(7)
    n_slots = 5

    def __init__(self, layout):
        self.layout = layout
        ne, nm = layout.n_e, layout.n_m
        n, w = nm + 1, nm + 3
        self.n, self.w = n, w
        zp = 2 * n + 4
        self.zero = list(range(zp))
        nxt = [zp] * self.rows

        def take(row, k):
            out = list(range(nxt[row], nxt[row] + k))
            nxt[row] += k
            return out

        W = layout.width
        self.slots = []
        for _ in range(self.n_slots):
            c = take(0, W)
            self.slots.append(_Slot(c[:nm], c[nm:nm + ne], c[nm + ne]))
        self.hid = take(0, 2)
        self.cache0 = tuple(take(0, 3))
        self.ext = take(0, 2)

        self.nb = take(1, ne + 1)
        self.esum = take(1, ne + 1)
        self.cache1 = tuple(take(1, 3))

        self.X = take(2, w)
        # guard and headroom bits of the larger significand are constant 0
        self.xcols = [self.zero[0]] + self.X[1:n + 1] + [self.zero[1]]
        self.eL = take(2, ne)
        self.sL, self.sub, self.rsign = take(2, 3)

        self.Y = take(3, w)
        (self.ysub,) = take(3, 1)
        self.PP = take(3, n)

        self.R = take(4, w)
        self.cache4 = tuple(take(4, 3))
        (self.negc,) = take(4, 1)
        self.acc0 = take(4, n)
        (self.guard0,) = take(4, 1)

        self.cache5 = tuple(take(5, 3))
        self.acc1 = take(5, n)
        (self.guard1,) = take(5, 1)

        self.adj = take(6, ne + 2)
        self.cols = max(nxt)

    def slot(self, i):
        return self.slots[i]

    def adj_bits(self, value, width=None):
        width = self.layout.n_e + 2 if width is None else width
        return _int_bits(value % (1 << width), width)


@lru_cache(maxsize=None)
def frame_for(layout):
    return Frame(layout)


def new_subarray(layout=FP32, lanes=1, cols=1024):
    fr = frame_for(layout)
    return Subarray(rows=lanes * Frame.rows, cols=max(cols, fr.cols), lane_rows=Frame.rows)


def _hidden(sa, fr, a, b):
    """Materialize the hidden bits: OR over each exponent field."""
    for i in range(fr.layout.n_e):
        v = sa.sense(Frame.WORDS, [a.exp[i], b.exp[i]])
        sa.drive(Frame.WORDS, fr.hid, COPY if i == 0 else OR, v)


def _signed(bits):
    v = bits_to_words(bits).astype(np.int64)
    k = bits.shape[1]
    return np.where(v >> (k - 1), v - (1 << k), v)


def _finish(sa, fr, out, ext, zero, clear_sign):
    """Saturate overflow, flush underflow and force exact zeros. ``ext`` are
    the sign-extension cells of the biased result exponent."""
    L = fr.layout
    e = _signed(sa.sense(Frame.WORDS, out.exp + ext))
    of = (e > L.exp_max) & ~zero
    uf = (e <= 0) & ~zero
    body = out.frac + out.exp
    sa.drive(Frame.WORDS, body, COPY, _int_bits(L.max_finite, len(body)), enable=of)
    sa.drive(Frame.WORDS, body, COPY, 0, enable=uf | zero)
    if clear_sign:
        sa.drive(Frame.WORDS, [out.sign], COPY, 0, enable=zero)
    return of * int(Flags.OVERFLOW) | uf * int(Flags.UNDERFLOW)


def _shifted(fr, sig, shift):
    """Y contents for significand ``sig`` shifted right by ``shift`` below one guard bit."""
    src = np.arange(fr.w) - 1 + shift
    ok = (src >= 0) & (src < fr.n)
    return np.where(ok, sig[:, np.clip(src, 0, fr.n - 1)], 0).astype(np.uint8)


def float_add_lanes(sa, ia=0, ib=1, io=2, layout=FP32):
    """Add slot ``ia`` and slot ``ib`` into slot ``io`` in every lane.

    Exponent alignment searches the exponent-difference word once per shift
    amount and moves the smaller significand with a single shifted write.
    Normalization searches the sum once per leading-one position and moves
    it with a single shifted write. Returns per-lane flags.
    """
    fr = frame_for(layout)
    ne, nm, n, w = layout.n_e, layout.n_m, fr.n, fr.w
    A, B, O = fr.slot(ia), fr.slot(ib), fr.slot(io)
    W0 = Frame.WORDS

    with sa.in_phase("exponent"):
        _hidden(sa, fr, A, B)
        sa.drive(Frame.EXP, fr.nb, COPY, 1)
        sa.drive(Frame.EXP, fr.nb[:ne], XOR, sa.sense(W0, B.exp))
        # esum = ea + ~eb = ea - eb - 1; its sign is set iff b has the larger
        # (or equal) exponent, and esum ^ sign is then the shift distance
        # minus [a is larger].
        _ripple(sa, W0, A.exp + fr.zero[:1], Frame.EXP, fr.nb, Frame.EXP, fr.esum, fr.cache1)
        sgn = sa.sense(Frame.EXP, [fr.esum[ne]])
        sa.drive(Frame.EXP, fr.esum[:ne], XOR, sgn)
    b_big = sgn[:, 0].astype(bool)
    a_big = ~b_big

    with sa.in_phase("align"):
        k = n + ne + 1
        sig_a, sig_b = A.frac + [fr.hid[0]], B.frac + [fr.hid[1]]
        v = sa.sense(W0, sig_a + A.exp + [A.sign] + sig_b + B.exp + [B.sign])
        va, vb = v[:, :k], v[:, k:]
        dst = fr.X[1:n + 1] + fr.eL + [fr.sL, fr.sub]
        for big, en in ((va, a_big), (vb, b_big)):
            sa.drive(Frame.MANT, dst, COPY, np.concatenate([big, va[:, -1:]], axis=1), enable=en)
        matched = np.zeros(sa.n_lanes, dtype=bool)
        none = np.zeros(sa.n_lanes, dtype=bool)
        for t in range(nm + 2):
            if t < (1 << ne):
                hit = sa.match(Frame.EXP, fr.esum[:ne], _int_bits(t, ne))
            else:
                hit = sa.match(Frame.EXP, fr.esum[:ne], np.zeros(ne), enable=none)
            m_a, m_b = hit & a_big, hit & b_big
            if not (m_a.any() or m_b.any()):
                continue
            sig = sa.sense(W0, sig_a + sig_b)
            for mask, small, shift in ((m_a, sig[:, n:], t + 1), (m_b, sig[:, :n], t)):
                sa.drive(Frame.YROW, fr.Y, COPY, _shifted(fr, small, shift), enable=mask)
            matched |= hit
        sa.drive(Frame.YROW, fr.Y, COPY, 0, enable=~matched)
        # effective subtraction: one's complement of Y plus a carry-in of 1
        sa.drive(Frame.MANT, [fr.sub], XOR, sa.sense(W0, [B.sign]))
        sub = sa.sense(Frame.MANT, [fr.sub])
        sa.drive(Frame.YROW, [fr.ysub], COPY, sub)
        sub = sub[:, 0].astype(bool)
        sa.drive(Frame.YROW, fr.Y, XOR, 1, enable=sub)

    with sa.in_phase("mantissa"):
        _ripple(sa, Frame.MANT, fr.xcols, Frame.YROW, fr.Y, Frame.RSUM, fr.R, fr.cache4, cin_col=fr.ysub)
        neg = sa.sense(Frame.RSUM, [fr.R[w - 1]])[:, 0].astype(bool) & sub
        src, rc = Frame.RSUM, fr.R
        if neg.any():
            # two's complement in place: invert, then a half-adder increment
            # chain with the carry cell sharing the row
            sa.drive(Frame.RSUM, fr.R + [fr.negc], kind_codes(*[XOR] * w, COPY), 1, enable=neg)
            for i in range(w - 2):
                v = sa.sense(Frame.RSUM, [fr.R[i], fr.negc])
                sa.drive(Frame.RSUM, [fr.R[i], fr.negc], kind_codes(XOR, AND), v[:, ::-1],
                         enable=neg)
            v = sa.sense(Frame.RSUM, [fr.negc])
            sa.drive(Frame.RSUM, [fr.R[w - 2]], XOR, v, enable=neg)
        sa.drive(Frame.MANT, [fr.rsign], COPY, sa.sense(Frame.MANT, [fr.sL]))
        sa.drive(Frame.MANT, [fr.rsign], XOR, 1, enable=neg)

    # e_big + (lead - n) spans [-n_m, 2^n_e - 1]: one sign bit suffices unless
    # the significand is wider than the exponent range
    xw = 1 if nm <= (1 << ne) else 2
    adj = fr.adj[:ne + xw]
    with sa.in_phase("normalize"):
        matched = np.zeros(sa.n_lanes, dtype=bool)
        for p in range(w - 1, 0, -1):
            key = np.zeros(w - p, dtype=np.uint8)
            key[0] = 1
            hit = sa.match(src, rc[p:], key)
            if not hit.any():
                continue
            r = sa.sense(src, rc)
            idx = p - nm + np.arange(nm)
            vals = np.where(idx >= 0, r[:, np.clip(idx, 0, None)], 0)
            sa.drive(W0, O.frac, COPY, vals, enable=hit)
            sa.drive(Frame.ADJ, adj, COPY, fr.adj_bits(p - n, ne + xw), enable=hit)
            matched |= hit
        zero = np.zeros(sa.n_lanes, dtype=bool)
        if not matched.all():
            g = sa.sense(src, [rc[0]])[:, 0].astype(bool)
            tiny = ~matched & g
            zero = ~matched & ~g
            sa.drive(W0, O.frac, COPY, 0, enable=tiny)
            sa.drive(Frame.ADJ, adj, COPY, fr.adj_bits(-n, ne + xw), enable=tiny)
        sa.drive(W0, [O.sign], COPY, sa.sense(Frame.MANT, [fr.rsign]))
        _ripple(sa, Frame.MANT, fr.eL + fr.zero[:xw], Frame.ADJ, adj, W0, O.exp + fr.ext[:xw],
                fr.cache0)
        return _finish(sa, fr, O, fr.ext[:xw], zero, clear_sign=True)


def float_mul_lanes(sa, ia=1, ib=2, io=3, layout=FP32):
    """Multiply slot ``ia`` by slot ``ib`` into slot ``io`` in every lane.

    The significand product is a right-shifting shift-and-add: for each
    multiplier bit the multiplicand is ANDed with that bit and added to the
    running sum, whose halved result is written to the other of two
    accumulator rows; the rows swap roles after every add. Multiplier bits
    that are zero in every lane skip the add and only defer the halving.
    """
    fr = frame_for(layout)
    ne, nm, n = layout.n_e, layout.n_m, fr.n
    A, B, O = fr.slot(ia), fr.slot(ib), fr.slot(io)
    W0 = Frame.WORDS

    with sa.in_phase("sign"):
        sa.drive(W0, [O.sign], COPY, sa.sense(W0, [A.sign]))
        sa.drive(W0, [O.sign], XOR, sa.sense(W0, [B.sign]))

    with sa.in_phase("exponent"):
        _hidden(sa, fr, A, B)
        _ripple(sa, W0, A.exp + fr.zero[:1], W0, B.exp + fr.zero[:1], Frame.EXP, fr.esum,
                fr.cache1)

    bufs = ((Frame.RSUM, fr.acc0, fr.guard0, fr.cache4),
            (Frame.ACC2, fr.acc1, fr.guard1, fr.cache5))
    with sa.in_phase("mantissa"):
        mcand = A.frac + [fr.hid[0]]
        mplier = B.frac + [fr.hid[1]]
        cur, nxt, d = None, 0, 0
        for j in range(n):
            b = sa.sense(W0, [mplier[j]])
            if not b.any():
                d += 1
                continue
            sa.drive(Frame.YROW, fr.PP, COPY, sa.sense(W0, mcand))
            sa.drive(Frame.YROW, fr.PP, AND, b)
            if cur is None:
                x_row, x_cols = Frame.YROW, fr.zero[:n]
            else:
                x_row, acc = bufs[cur][0], bufs[cur][1]
                x_cols = [acc[i + d] if i + d < n else fr.zero[i] for i in range(n)]
            orow, oacc, og, oc = bufs[nxt]
            _ripple(sa, x_row, x_cols, Frame.YROW, fr.PP, orow, [og] + oacc[:n - 1], oc,
                    carry_col=oacc[n - 1])
            cur, nxt, d = nxt, 1 - nxt, 0

    with sa.in_phase("normalize"):
        if cur is None:
            sa.drive(W0, O.frac + O.exp, COPY, 0)
            return np.zeros(sa.n_lanes, dtype=np.int64)
        row, acc, guard, _ = bufs[cur]
        v = sa.sense(row, acc + [guard])
        av = np.zeros((sa.n_lanes, n), dtype=np.uint8)
        av[:, :n - d] = v[:, d:n]
        gv = v[:, d - 1:d] if d else v[:, n:]
        top = av[:, n - 1].astype(bool)
        zero = ~top & ~av[:, n - 2].astype(bool) if n >= 2 else ~top
        sa.drive(W0, O.frac, COPY, av[:, :nm], enable=top)
        sa.drive(W0, O.frac, COPY, np.concatenate([gv, av[:, :nm - 1]], axis=1), enable=~top)
        sa.drive(Frame.ADJ, fr.adj, COPY, fr.adj_bits(1 - layout.bias), enable=top)
        sa.drive(Frame.ADJ, fr.adj, COPY, fr.adj_bits(-layout.bias), enable=~top)
        _ripple(sa, Frame.EXP, fr.esum + fr.zero[:1], Frame.ADJ, fr.adj, W0, O.exp + fr.ext,
                fr.cache0)
        return _finish(sa, fr, O, fr.ext, zero, clear_sign=False)


# -- public single-value and batched entry points ------------------------------------


@dataclass
class StoredFloat:
    sign: int
    exponent: int
    mantissa: int
    layout: FloatLayout = FP32
    location: WordLoc = None
    flags: Flags = Flags.NONE

    @classmethod
    def from_bits(cls, bits, layout=FP32, **kw):
        s, e, m = layout.unpack(int(bits))
        return cls(s, e, m, layout, **kw)

    @property
    def bits(self):
        return self.layout.pack(self.sign, self.exponent, self.mantissa)

    @property
    def value(self):
        return decode(self.bits, self.layout)


def encode_float(value, layout=FP32):
    bits, flags = encode(value, layout)
    return StoredFloat.from_bits(bits, layout, flags=flags)


def decode_float(f):
    return decode(f.bits, f.layout)


def place_words(sa, fr, slot, words):
    """Host-side (unlogged) placement of one word per lane into a slot."""
    sa.poke(Frame.WORDS, fr.slot(slot).cols, words_to_bits(words, fr.layout.width))


def collect_words(sa, fr, slot):
    return bits_to_words(sa.peek(Frame.WORDS, fr.slot(slot).cols))


def _single(sa, layout, op, placed, io):
    fr = frame_for(layout)
    sa = new_subarray(layout) if sa is None else sa
    for slot, f in placed:
        place_words(sa, fr, slot, [f.bits])
    flags = op(sa)
    word = int(collect_words(sa, fr, io)[0])
    loc = WordLoc(Frame.WORDS, fr.slot(io).cols)
    return StoredFloat.from_bits(word, layout, location=loc, flags=Flags(int(flags[0])))


def float_add(sa, a, b, layout=FP32):
    """a + b on ``sa`` (a fresh one-lane subarray if None)."""
    return _single(sa, layout, lambda s: float_add_lanes(s, 0, 1, 2, layout),
                   [(0, a), (1, b)], 2)


def float_mul(sa, a, b, layout=FP32):
    return _single(sa, layout, lambda s: float_mul_lanes(s, 1, 2, 3, layout),
                   [(1, a), (2, b)], 3)


def mac_lanes(sa, layout=FP32):
    """Slot 0 + slot 1 * slot 2 into slot 4; the product stays in slot 3."""
    f1 = float_mul_lanes(sa, 1, 2, 3, layout)
    return f1 | float_add_lanes(sa, 0, 3, 4, layout)


def mac(sa, acc, x, w, layout=FP32):
    """acc + x * w; the product stays in memory as the adder's operand."""
    return _single(sa, layout, lambda s: mac_lanes(s, layout),
                   [(0, acc), (1, x), (2, w)], 4)


def _batched(op, operands, slots, io, layout, lanes, sa_factory=None):
    fr = frame_for(layout)
    operands = [np.asarray(o, dtype=np.uint64).reshape(-1) for o in operands]
    total = operands[0].size
    out = np.zeros(total, dtype=np.uint64)
    flags = np.zeros(total, dtype=np.int64)
    for lo in range(0, total, lanes):
        hi = min(total, lo + lanes)
        sa = new_subarray(layout, hi - lo) if sa_factory is None else sa_factory(hi - lo)
        for slot, words in zip(slots, operands):
            place_words(sa, fr, slot, words[lo:hi])
        flags[lo:hi] = op(sa)
        out[lo:hi] = collect_words(sa, fr, io)
    return out, flags


def add_words(a, b, layout=FP32, lanes=1024, sa_factory=None):
    """Elementwise sums of encoded words, computed ``lanes`` at a time."""
    return _batched(lambda s: float_add_lanes(s, 0, 1, 2, layout), (a, b), (0, 1), 2,
                    layout, lanes, sa_factory)


def mul_words(a, b, layout=FP32, lanes=1024, sa_factory=None):
    return _batched(lambda s: float_mul_lanes(s, 1, 2, 3, layout), (a, b), (1, 2), 3,
                    layout, lanes, sa_factory)


def mac_words(acc, x, w, layout=FP32, lanes=1024, sa_factory=None):
    return _batched(lambda s: mac_lanes(s, layout), (acc, x, w), (0, 1, 2), 4,
                    layout, lanes, sa_factory)
