import io

import numpy as np
import pytest

from sotpim.cell import LogicKind, WriteConfig
from sotpim.subarray import ColumnOp, EventKind, LogSummary, Subarray, WordLoc


def test_read_write_roundtrip_and_log():
    sa = Subarray(16, 16)
    sa.write_row(3, [ColumnOp(c, WriteConfig(1)) for c in (1, 4, 5)])
    assert sa.read_row(3, [0, 1, 4, 5]).tolist() == [0, 1, 1, 1]
    kinds = [e.kind for e in sa.log]
    assert kinds == [EventKind.ROW_WRITE, EventKind.ROW_READ]
    assert [e.bits_touched for e in sa.log] == [3, 4]


def test_logic_write_uses_stored_state():
    sa = Subarray(4, 4)
    sa.write_row(0, [ColumnOp(0, WriteConfig(1)), ColumnOp(1, WriteConfig(1))])
    sa.write_row(0, [ColumnOp(0, WriteConfig(1, LogicKind.XOR)),
                     ColumnOp(1, WriteConfig(0, LogicKind.AND)),
                     ColumnOp(2, WriteConfig(1, LogicKind.OR))])
    assert sa.read_row(0, [0, 1, 2]).tolist() == [0, 0, 1]


def test_reads_do_not_change_state():
    sa = Subarray(8, 8)
    sa.poke(2, [0, 3], [1, 1])
    before = sa.cells.copy()
    for _ in range(5):
        sa.read_row(2, range(8))
    assert np.array_equal(before, sa.cells)


def test_out_of_bounds_and_duplicates():
    sa = Subarray(8, 8)
    with pytest.raises(IndexError):
        sa.read_row(8, [0])
    with pytest.raises(IndexError):
        sa.write_row(0, [ColumnOp(8, WriteConfig(1))])
    with pytest.raises(ValueError):
        sa.write_row(0, [ColumnOp(1, WriteConfig(1)), ColumnOp(1, WriteConfig(0))])
    assert len(sa) == 0


def test_search_returns_matches_and_logs_once():
    sa = Subarray(8, 8)
    sa.poke(1, [0, 1, 2], [1, 0, 1])
    sa.poke(2, [0, 1, 2], [1, 0, 1])
    region = [WordLoc(r, (0, 1, 2)) for r in range(4)]
    hits = sa.search([1, 0, 1], region)
    assert [h.row for h in hits] == [1, 2]
    assert sa.summarize_log().counts() == (0, 0, 1)


def test_search_without_match_still_logged():
    sa = Subarray(8, 8)
    assert sa.search([1, 1], [WordLoc(0, (0, 1))]) == []
    assert sa.search([1], []) == []
    assert sa.summarize_log().n_searches == 2


def test_lane_ops_apply_to_every_lane():
    sa = Subarray(24, 8, lane_rows=8)
    assert sa.n_lanes == 3
    sa.poke(1, [0, 1], np.array([[1, 0], [0, 1], [1, 1]]))
    v = sa.sense(1, [0, 1])
    sa.drive(2, [0, 1], LogicKind.COPY, v[:, ::-1])
    assert sa.peek(2, [0, 1]).tolist() == [[0, 1], [1, 0], [1, 1]]
    hit = sa.match(2, [0, 1], [1, 1])
    assert hit.tolist() == [False, False, True]
    assert sa.summarize_log().counts() == (1, 1, 1)


def test_masked_write_and_elision():
    sa = Subarray(16, 4, lane_rows=8)
    sa.drive(0, [0], LogicKind.COPY, 1, enable=np.array([True, False]))
    assert sa.peek(0, [0])[:, 0].tolist() == [1, 0]
    sa.drive(0, [1], LogicKind.COPY, 1, enable=np.array([False, False]))
    assert sa.summarize_log().n_writes == 1


def test_lane_rows_must_divide():
    with pytest.raises(ValueError):
        Subarray(10, 4, lane_rows=4)


def test_phase_summary_and_trace():
    sa = Subarray(8, 8)
    with sa.in_phase("a"):
        sa.read_row(0, [0, 1])
    sa.write_row(0, [ColumnOp(0, WriteConfig(1))])
    s = sa.summarize_log()
    assert s.by_phase["a"] == {"RowRead": 1, "RowRead_bits": 2}
    buf = io.StringIO()
    sa.dump_trace(buf)
    assert buf.getvalue().splitlines() == ["kind,row,bits_touched", "RowRead,0,2", "RowWrite,0,1"]
    total = s + s
    assert total.counts() == (2, 2, 0) and total.by_phase["a"]["RowRead"] == 2
    assert (LogSummary.empty() + s) == s


def test_fault_injection_flips_after_nth_op():
    sa = Subarray(8, 8)
    sa.inject_fault(2, 0, 5, 5)
    sa.read_row(0, [0])
    assert sa.peek(5, [5])[0, 0] == 0
    sa.read_row(0, [0])
    assert sa.peek(5, [5])[0, 0] == 1
