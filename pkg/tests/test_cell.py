import itertools

import pytest

from sotpim.cell import LOGIC_TABLE, CellState, LogicKind, WriteConfig, apply_write, read_cell

TRUTH = {
    LogicKind.COPY: lambda a, s: a,
    LogicKind.AND: lambda a, s: a & s,
    LogicKind.OR: lambda a, s: a | s,
    LogicKind.XOR: lambda a, s: a ^ s,
}


@pytest.mark.parametrize("kind,applied,stored", list(itertools.product(LogicKind, (0, 1), (0, 1))))
def test_write_truth_table(kind, applied, stored):
    cell = CellState.encode(stored)
    new = apply_write(cell, WriteConfig(applied, kind))
    assert read_cell(new) == TRUTH[kind](applied, stored)
    assert LOGIC_TABLE[kind, applied, stored] == TRUTH[kind](applied, stored)


def test_high_is_one():
    assert CellState.HIGH.decode() == 1
    assert CellState.encode(0) is CellState.LOW


def test_read_is_non_destructive():
    cell = CellState.HIGH
    assert read_cell(cell) == 1
    assert read_cell(cell) == 1
    assert cell is CellState.HIGH


@pytest.mark.parametrize("applied", [2, -1, None])
def test_invalid_applied_bit(applied):
    with pytest.raises(ValueError):
        WriteConfig(applied)


def test_invalid_direction_and_kind():
    with pytest.raises(ValueError):
        WriteConfig(1, direction=3)
    with pytest.raises(ValueError):
        WriteConfig(1, kind=7)
