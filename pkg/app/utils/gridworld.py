from dataclasses import dataclass
from enum import IntEnum
from typing import Iterator, NamedTuple, Optional, Sequence


class GridCell(NamedTuple):
    """Tile coordinates, row 0 at the bottom"""
    col: int
    row: int


class Move(IntEnum):
    NORTH = 0
    SOUTH = 1
    WEST = 2
    EAST = 3
    STAY = 4


MOVE_DELTAS = {
    Move.NORTH: (0, 1),
    Move.SOUTH: (0, -1),
    Move.WEST: (-1, 0),
    Move.EAST: (1, 0),
    Move.STAY: (0, 0),
}


def apply_move(cell: GridCell, move: Move) -> GridCell:
    dc, dr = MOVE_DELTAS[Move(move)]
    return GridCell(cell.col + dc, cell.row + dr)


def taxicab_distance(u: Sequence[int], v: Sequence[int]) -> int:
    return abs(u[0] - v[0]) + abs(u[1] - v[1])


@dataclass(frozen=True)
class Grid:
    width: int
    height: int

    @property
    def state_count(self) -> int:
        return self.width * self.height

    def contains(self, cell: Sequence[int]) -> bool:
        return 0 <= cell[0] < self.width and 0 <= cell[1] < self.height

    def state_id(self, cell: Sequence[int]) -> int:
        if not self.contains(cell):
            raise ValueError(f"cell {tuple(cell)} is outside the {self.width}x{self.height} grid")
        return int(cell[1]) * self.width + int(cell[0])

    def cell(self, state: int) -> GridCell:
        row, col = divmod(int(state), self.width)
        return GridCell(col, row)

    def cells(self) -> Iterator[GridCell]:
        for state in range(self.state_count):
            yield self.cell(state)

    def step(self, state: int, move: Move) -> Optional[int]:
        """Successor state of a deterministic move; None when it leaves the grid"""
        target = apply_move(self.cell(state), move)
        if not self.contains(target):
            return None
        return self.state_id(target)

    def distance(self, u: int, v: int) -> int:
        return taxicab_distance(self.cell(u), self.cell(v))
