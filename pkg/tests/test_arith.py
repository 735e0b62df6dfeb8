import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sotpim.arith import (FaLocs, Frame, add_nbit, add_words, encode_float, float_add,
                          float_mul, full_add_1bit, mac, mac_words, mul_words, new_subarray)
from sotpim.softfloat import FP32, Flags, FloatLayout, random_words, ref_add, ref_mac, ref_mul
from sotpim.subarray import EventKind, Subarray, WordLoc

LAYOUTS = [FP32, FloatLayout(5, 10), FloatLayout(8, 7), FloatLayout(3, 4), FloatLayout(2, 1),
           FloatLayout(4, 20)]


def fa_array(x, y, z):
    sa = Subarray(4, 8)
    sa.poke(0, [0], x)
    sa.poke(1, [0], y)
    sa.poke(2, [0], z)
    return sa, FaLocs((0, 0), (1, 0), ((2, 0), (2, 1), (2, 2), (2, 3)))


@pytest.mark.parametrize("x,y,z", list(itertools.product((0, 1), repeat=3)))
def test_full_adder_truth_table(x, y, z):
    sa, locs = fa_array(x, y, z)
    s, c = full_add_1bit(sa, locs)
    assert (s, c) == ((x + y + z) & 1, (x + y + z) >> 1)
    assert sa.peek(0, [0])[0, 0] == x and sa.peek(1, [0])[0, 0] == y


def test_full_adder_is_four_read_write_steps_in_four_cells():
    sa, locs = fa_array(1, 0, 1)
    full_add_1bit(sa, locs)
    kinds = [e.kind for e in sa.log]
    assert kinds == [EventKind.ROW_READ, EventKind.ROW_WRITE] * 4
    written = {e.row for e in sa.log if e.kind is EventKind.ROW_WRITE}
    assert written == {2}
    changed = np.flatnonzero(sa.cells[2] != 0)
    assert set(changed) <= {0, 1, 2, 3}


def test_full_adder_rejects_overlap():
    sa = Subarray(4, 8)
    with pytest.raises(ValueError):
        full_add_1bit(sa, FaLocs((2, 0), (1, 0), ((2, 0), (2, 1), (2, 2), (2, 3))))


def test_add_nbit_exhaustive_4bit():
    vals = np.array(list(itertools.product(range(16), repeat=2)))
    sa = Subarray(len(vals) * 2, 16, lane_rows=2)
    sa.poke(0, range(4), ((vals[:, :1] >> np.arange(4)) & 1))
    sa.poke(0, range(4, 8), ((vals[:, 1:] >> np.arange(4)) & 1))
    got = add_nbit(sa, WordLoc(0, range(4)), WordLoc(0, range(4, 8)), WordLoc(1, range(5)))
    assert np.array_equal(got, vals.sum(axis=1))
    assert sa.summarize_log().counts() == (16, 16, 0)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 40).flatmap(lambda n: st.tuples(
    st.just(n), st.integers(0, 2**n - 1), st.integers(0, 2**n - 1))))
def test_add_nbit_random_widths(args):
    n, x, y = args
    sa = Subarray(2, 4 * n + 8, lane_rows=2)
    sa.poke(0, range(n), [(x >> i) & 1 for i in range(n)])
    sa.poke(0, range(n, 2 * n), [(y >> i) & 1 for i in range(n)])
    got = add_nbit(sa, WordLoc(0, range(n)), WordLoc(0, range(n, 2 * n)), WordLoc(1, range(n + 1)))
    assert int(got[0]) == x + y


def test_add_nbit_width_mismatch():
    sa = Subarray(2, 32)
    with pytest.raises(ValueError):
        add_nbit(sa, WordLoc(0, range(3)), WordLoc(0, range(3, 5)), WordLoc(1, range(4)))


def edge_words(layout):
    L = layout
    vals = [0, L.pack(1, 0, 0), L.pack(0, 1, 0), L.pack(1, 1, L.frac_mask), L.max_finite,
            L.pack(1, L.exp_max, 0), L.pack(0, L.bias, 0), L.pack(1, L.bias, 1),
            L.pack(0, L.bias, L.frac_mask), L.pack(0, L.bias + 1, 0)]
    return np.array(vals, dtype=np.uint64)


@pytest.mark.parametrize("layout", LAYOUTS, ids=lambda L: f"{L.n_e}-{L.n_m}")
def test_float_ops_match_oracle(layout):
    rng = np.random.default_rng(layout.n_e * 100 + layout.n_m)
    a = np.concatenate([random_words(rng, 1500, layout, spread=layout.bias),
                        np.repeat(edge_words(layout), 10)])
    b = np.concatenate([random_words(rng, 1500, layout, spread=3),
                        np.tile(edge_words(layout), 10)])
    for fn, ref in ((add_words, ref_add), (mul_words, ref_mul)):
        got, flags = fn(a, b, layout, lanes=512)
        for i in range(a.size):
            want, wf = ref(int(a[i]), int(b[i]), layout)
            assert (int(got[i]), int(flags[i])) == (want, int(wf)), (fn.__name__, hex(a[i]), hex(b[i]))


def test_mac_words_matches_oracle():
    rng = np.random.default_rng(5)
    acc, x, w = random_words(rng, 600, FP32).reshape(3, 200)
    got, flags = mac_words(acc, x, w, FP32, lanes=100)
    for i in range(200):
        assert (int(got[i]), int(flags[i])) == tuple(map(int, ref_mac(int(acc[i]), int(x[i]), int(w[i]))))


def test_single_value_api():
    assert float_add(None, encode_float(1.5), encode_float(2.5)).value == 4.0
    assert float_mul(None, encode_float(-1.5), encode_float(2.5)).value == -3.75
    assert mac(None, encode_float(1.0), encode_float(2.0), encode_float(3.0)).value == 7.0
    r = float_add(None, encode_float(1.0), encode_float(-1.0))
    assert r.bits == 0 and r.flags == Flags.NONE


def test_overflow_saturates_and_underflow_flushes():
    big = encode_float(3e38)
    r = float_add(None, big, big)
    assert r.flags == Flags.OVERFLOW and r.bits == FP32.max_finite
    r = float_mul(None, encode_float(-1e30), encode_float(1e30))
    assert r.flags == Flags.OVERFLOW and r.sign == 1 and r.exponent == FP32.exp_max
    r = float_mul(None, encode_float(1e-30), encode_float(-1e-30))
    assert r.flags == Flags.UNDERFLOW and r.bits == FP32.pack(1, 0, 0)


def test_add_is_commutative():
    rng = np.random.default_rng(9)
    a, b = random_words(rng, 800, FP32).reshape(2, 400)
    assert np.array_equal(add_words(a, b)[0], add_words(b, a)[0])
    assert np.array_equal(mul_words(a, b)[0], mul_words(b, a)[0])


@pytest.mark.parametrize("layout", [FP32, FloatLayout(5, 10), FloatLayout(8, 7)],
                         ids=lambda L: f"{L.n_e}-{L.n_m}")
def test_add_search_count(layout):
    sa = new_subarray(layout)
    float_add(sa, encode_float(1.5, layout), encode_float(-2.75, layout), layout)
    assert sa.summarize_log().n_searches == 2 * (layout.n_m + 2)


def test_operands_are_preserved():
    sa = new_subarray(FP32)
    a, b = encode_float(3.25), encode_float(-0.125)
    float_mul(sa, a, b)
    assert float_add(sa, a, b).value == 3.125


def test_mul_accumulators_alternate():
    sa = new_subarray(FP32)
    float_mul(sa, encode_float(1.75), encode_float(-1.9999))
    rows = []
    for e in sa.log:
        if e.phase == "mantissa" and e.kind is EventKind.ROW_WRITE and e.row in (Frame.RSUM, Frame.ACC2):
            if not rows or rows[-1] != e.row:
                rows.append(e.row)
    assert len(rows) > 4
    assert all(r1 != r2 for r1, r2 in zip(rows, rows[1:]))
