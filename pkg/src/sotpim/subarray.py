"""R x C array of 1T-1R cells with an append-only micro-op log.

Two access paths exist. The plain methods (:meth:`Subarray.read_row`,
:meth:`Subarray.write_row`, :meth:`Subarray.search`) address the whole array
in global coordinates. The lane methods (:meth:`Subarray.sense`,
:meth:`Subarray.drive`, :meth:`Subarray.match`) split the rows into equal
lanes of ``lane_rows`` rows each and apply one micro-op to the same local row
of every lane at once, which is how row-parallel PIM arithmetic is issued.
Either way, one call is one logged event.
"""

import csv
from collections import Counter
from contextlib import contextmanager
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .cell import LOGIC_TABLE, LogicKind, WriteConfig


class EventKind(Enum):
    ROW_READ = "RowRead"
    ROW_WRITE = "RowWrite"
    SEARCH = "Search"


@dataclass(frozen=True)
class CostEvent:
    kind: EventKind
    row: int
    bits_touched: int
    phase: str = ""


@dataclass(frozen=True)
class ColumnOp:
    col: int
    cfg: WriteConfig


@dataclass(frozen=True)
class WordLoc:
    """A word placed at ``row`` over ``cols`` (LSB first)."""

    row: int
    cols: tuple

    def __post_init__(self):
        object.__setattr__(self, "cols", tuple(int(c) for c in self.cols))


@dataclass(frozen=True)
class LogSummary:
    n_reads: int
    n_writes: int
    n_searches: int
    read_bits: int
    write_bits: int
    search_bits: int
    by_phase: dict

    def counts(self):
        return (self.n_reads, self.n_writes, self.n_searches)

    def __add__(self, other):
        phases = {k: Counter(v) for k, v in self.by_phase.items()}
        for k, v in other.by_phase.items():
            phases.setdefault(k, Counter()).update(v)
        return LogSummary(self.n_reads + other.n_reads, self.n_writes + other.n_writes,
                          self.n_searches + other.n_searches, self.read_bits + other.read_bits,
                          self.write_bits + other.write_bits, self.search_bits + other.search_bits,
                          {k: dict(v) for k, v in phases.items()})

    @classmethod
    def empty(cls):
        return cls(0, 0, 0, 0, 0, 0, {})


_KIND_CODES = (EventKind.ROW_READ, EventKind.ROW_WRITE, EventKind.SEARCH)


class Subarray:
    def __init__(self, rows=1024, cols=1024, lane_rows=None):
        if rows < 1 or cols < 1:
            raise ValueError("subarray needs at least one row and one column")
        lane_rows = rows if lane_rows is None else lane_rows
        if rows % lane_rows:
            raise ValueError(f"{rows} rows do not split into lanes of {lane_rows}")
        self.rows = rows
        self.cols = cols
        self.lane_rows = lane_rows
        self.n_lanes = rows // lane_rows
        self.cells = np.zeros((rows, cols), dtype=np.uint8)
        self._lanes = self.cells.reshape(self.n_lanes, lane_rows, cols)
        self._log = []
        self.phase = ""
        self._fault = None

    # -- logging -------------------------------------------------------

    def _emit(self, code, row, bits):
        self._log.append((code, row, bits, self.phase))
        if self._fault is not None and len(self._log) == self._fault[0]:
            _, lane, row_, col = self._fault
            self._lanes[lane, row_, col] ^= 1
            self._fault = None

    @contextmanager
    def in_phase(self, name):
        prev, self.phase = self.phase, name
        try:
            yield
        finally:
            self.phase = prev

    @property
    def log(self):
        return [CostEvent(_KIND_CODES[c], r, b, p) for c, r, b, p in self._log]

    def __len__(self):
        return len(self._log)

    def reset_log(self):
        self._log.clear()

    def summarize_log(self):
        n = [0, 0, 0]
        bits = [0, 0, 0]
        by_phase = {}
        for code, _, b, phase in self._log:
            n[code] += 1
            bits[code] += b
            ph = by_phase.setdefault(phase, Counter())
            ph[_KIND_CODES[code].value] += 1
            ph[_KIND_CODES[code].value + "_bits"] += b
        return LogSummary(n[0], n[1], n[2], bits[0], bits[1], bits[2],
                          {k: dict(v) for k, v in by_phase.items()})

    def dump_trace(self, fh):
        """Write the log as ``kind,row,bits_touched`` CSV rows (with header)."""
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["kind", "row", "bits_touched"])
        for code, row, bits, _ in self._log:
            w.writerow([_KIND_CODES[code].value, row, bits])

    def inject_fault(self, after_ops, lane, row, col):
        """Test hook: flip one cell right after the ``after_ops``-th micro-op."""
        self._fault = (int(after_ops), lane, row, col)

    # -- bounds --------------------------------------------------------

    def _check_row(self, row, limit):
        if not 0 <= row < limit:
            raise IndexError(f"row {row} out of range [0, {limit})")

    def _check_cols(self, cols):
        if isinstance(cols, (list, tuple)):
            if not cols:
                raise ValueError("empty column set")
            lo, hi = min(cols), max(cols)
            cols = np.array(cols, dtype=np.intp)
        else:
            cols = np.asarray(cols, dtype=np.intp).reshape(-1)
            if cols.size == 0:
                raise ValueError("empty column set")
            lo, hi = cols.min(), cols.max()
        if lo < 0 or hi >= self.cols:
            raise IndexError(f"column out of range [0, {self.cols})")
        return cols

    # -- global-coordinate micro-ops ----------------------------------------

    def read_row(self, row, cols):
        self._check_row(row, self.rows)
        cols = self._check_cols(cols)
        out = self.cells[row, cols].copy()
        self._emit(0, row, cols.size)
        return out

    def write_row(self, row, ops):
        self._check_row(row, self.rows)
        if not ops:
            raise ValueError("write_row needs at least one ColumnOp")
        cols = self._check_cols([op.col for op in ops])
        if len(set(cols.tolist())) != cols.size:
            raise ValueError("duplicate column in one write step")
        kinds = np.array([op.cfg.kind for op in ops], dtype=np.intp)
        applied = np.array([op.cfg.applied for op in ops], dtype=np.intp)
        cur = self.cells[row, cols]
        self.cells[row, cols] = LOGIC_TABLE[kinds, applied, cur]
        self._emit(1, row, cols.size)

    def search(self, key, region):
        """Return the locations in ``region`` whose stored bits equal ``key``."""
        key = np.asarray(key, dtype=np.uint8).reshape(-1)
        if key.size == 0:
            raise ValueError("empty search key")
        hits = []
        for loc in region:
            if len(loc.cols) != key.size:
                raise ValueError(f"word {loc} does not span {key.size} cells")
            self._check_row(loc.row, self.rows)
            cols = self._check_cols(loc.cols)
            if np.array_equal(self.cells[loc.row, cols], key):
                hits.append(loc)
        self._emit(2, region[0].row if region else 0, key.size)
        return hits

    # -- lane-parallel micro-ops -------------------------------------------

    def sense(self, row, cols):
        """Read local ``row`` of every lane; returns shape (n_lanes, len(cols))."""
        self._check_row(row, self.lane_rows)
        cols = self._check_cols(cols)
        out = self._lanes[:, row, cols]
        self._emit(0, row, cols.size)
        return out

    def drive(self, row, cols, kinds, applied, enable=None):
        """Column-parallel conditional write of local ``row`` in every lane.

        ``kinds`` is one LogicKind or one per column; ``applied`` broadcasts to
        (n_lanes, len(cols)). Lanes with ``enable`` False keep their state; if
        no lane is enabled the write is not issued and nothing is logged.
        """
        if enable is not None and not enable.any():
            return
        self._check_row(row, self.lane_rows)
        cols = self._check_cols(cols)
        if len(set(cols.tolist())) != cols.size:
            raise ValueError("duplicate column in one write step")
        applied = np.asarray(applied, dtype=np.intp)
        if applied.ndim > 2 or (applied.ndim == 2 and (applied.shape[0] not in (1, self.n_lanes)
                                                       or applied.shape[1] not in (1, cols.size))):
            raise ValueError(f"applied bits of shape {applied.shape} do not fit the write")
        cur = self._lanes[:, row, cols]
        # indexing broadcasts applied against the (n_lanes, k) stored bits
        new = LOGIC_TABLE[kinds, applied, cur]
        if enable is not None:
            new = np.where(enable[:, None], new, cur)
        self._lanes[:, row, cols] = new
        self._emit(1, row, cols.size)

    def match(self, row, cols, key, care=None, enable=None):
        """Associative compare of ``key`` against the word at (row, cols) in
        every lane. ``care`` masks don't-care key bits. Returns a bool per lane."""
        self._check_row(row, self.lane_rows)
        cols = self._check_cols(cols)
        key = np.asarray(key, dtype=np.uint8).reshape(-1)
        if key.size != cols.size:
            raise ValueError("key width differs from word width")
        diff = self._lanes[:, row, cols] != key
        if care is not None:
            diff &= np.asarray(care, dtype=bool)
        hit = ~diff.any(axis=1)
        if enable is not None:
            hit &= enable
        self._emit(2, row, cols.size)
        return hit

    # -- unlogged host access (data placement, result readout) --------------

    def poke(self, row, cols, bits):
        """Place data without logging; ``bits`` broadcasts to (n_lanes, k)."""
        cols = self._check_cols(cols)
        self._lanes[:, row, cols] = np.broadcast_to(
            np.asarray(bits, dtype=np.uint8), (self.n_lanes, cols.size))

    def peek(self, row, cols):
        cols = self._check_cols(cols)
        return self._lanes[:, row, cols].copy()


def kind_codes(*kinds):
    return np.array([LogicKind(k) for k in kinds], dtype=np.intp)
