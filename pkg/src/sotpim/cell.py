"""Single 1T-1R SOT-MRAM cell with logic-in-write.

A cell stores one bit as the resistance of its MTJ (High = 1, Low = 0).
Reads are non-destructive. A write applies a bit ``A`` on the read bit-line
and a current direction on WBL/SL; depending on that configuration the new
state is a Boolean function of ``A`` and the stored bit.
"""

from dataclasses import dataclass
from enum import Enum, IntEnum

import numpy as np


class CellState(Enum):
    LOW = 0
    HIGH = 1

    @classmethod
    def encode(cls, bit):
        return cls.HIGH if bit else cls.LOW

    def decode(self):
        return self.value


class LogicKind(IntEnum):
    COPY = 0
    AND = 1
    OR = 2
    XOR = 3


# LOGIC_TABLE[kind, applied, stored] -> new stored bit
LOGIC_TABLE = np.array(
    [
        [[0, 0], [1, 1]],  # copy
        [[0, 0], [0, 1]],  # and
        [[0, 1], [1, 1]],  # or
        [[0, 1], [1, 0]],  # xor
    ],
    dtype=np.uint8,
)


@dataclass(frozen=True)
class WriteConfig:
    """Drive condition for one write.

    ``applied`` is the RBL level (V_b for 1, 0 V for 0). ``direction`` is the
    write current direction between WBL and SL; it is recorded but the
    resulting function is selected by ``kind``, since the electrical mapping
    is not simulated.
    """

    applied: int
    kind: LogicKind = LogicKind.COPY
    direction: int = 1

    def __post_init__(self):
        if self.applied not in (0, 1):
            raise ValueError(f"applied bit must be 0 or 1, got {self.applied!r}")
        if self.direction not in (0, 1):
            raise ValueError(f"current direction must be 0 or 1, got {self.direction!r}")
        object.__setattr__(self, "kind", LogicKind(self.kind))


def read_cell(cell: CellState) -> int:
    return cell.decode()


def apply_write(cell: CellState, cfg: WriteConfig) -> CellState:
    return CellState.encode(int(LOGIC_TABLE[cfg.kind, cfg.applied, cell.decode()]))
