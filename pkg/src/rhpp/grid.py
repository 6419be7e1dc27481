"""Warehouse grid maps: cell kinds, parsing, neighborhood queries."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field


class CellKind(enum.Enum):
    OBSTACLE = "@"
    TRAVEL = "."
    HOME = "h"
    ENDPOINT = "e"
    INBOUND = "i"
    OUTBOUND = "o"
    AISLE = "a"
    DECK = "d"


_CHAR_TO_KIND = {kind.value: kind for kind in CellKind}

# Region groupings used by the two task-assignment models.
AMAZON_START_KINDS = (CellKind.HOME, CellKind.TRAVEL)
SYMBOTIC_START_KINDS = (CellKind.DECK, CellKind.INBOUND)


class Move(enum.Enum):
    UP = 0
    DOWN = 1
    LEFT = 2
    RIGHT = 3
    WAIT = 4


# (drow, dcol) per move, in the canonical Up, Down, Left, Right, Wait order.
MOVE_DELTAS = {
    Move.UP: (-1, 0),
    Move.DOWN: (1, 0),
    Move.LEFT: (0, -1),
    Move.RIGHT: (0, 1),
    Move.WAIT: (0, 0),
}

MOVE_ORDER = (Move.UP, Move.DOWN, Move.LEFT, Move.RIGHT)


class MapFormatError(ValueError):
    """Malformed map file. Carries 1-based line and column when known."""

    def __init__(self, message, line=None, column=None):
        loc = ""
        if line is not None:
            loc = f" (line {line}" + (f", column {column}" if column is not None else "") + ")"
        super().__init__(message + loc)
        self.line = line
        self.column = column


@dataclass
class GridMap:
    """Immutable grid with region semantics. Locations are row-major ints."""

    width: int
    height: int
    cells: tuple
    _nbrs: list = field(default_factory=list, repr=False, compare=False)
    _dist_fields: dict = field(default_factory=dict, repr=False, compare=False)
    _diameter: list = field(default_factory=list, repr=False, compare=False)

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise MapFormatError("width and height must be positive")
        if len(self.cells) != self.width * self.height:
            raise MapFormatError("cell array length does not match dimensions")
        if not any(k is not CellKind.OBSTACLE for k in self.cells):
            raise MapFormatError("map has no traversable cell")
        # Precompute movement neighbors once; GridMap is read-only afterwards.
        self._nbrs = [self._movement_neighbors(loc) for loc in range(len(self.cells))]

    # -- basic queries -------------------------------------------------

    def in_bounds(self, loc):
        return 0 <= loc < self.width * self.height

    def is_traversable(self, loc):
        return self.in_bounds(loc) and self.cells[loc] is not CellKind.OBSTACLE

    def kind(self, loc):
        return self.cells[loc]

    def row_col(self, loc):
        return divmod(loc, self.width)

    def loc_of(self, row, col):
        return row * self.width + col

    def cells_of_kind(self, *kinds):
        wanted = set(kinds)
        return [loc for loc, k in enumerate(self.cells) if k in wanted]

    def _movement_neighbors(self, loc):
        if self.cells[loc] is CellKind.OBSTACLE:
            return []
        row, col = divmod(loc, self.width)
        out = []
        for move in MOVE_ORDER:
            dr, dc = MOVE_DELTAS[move]
            nr, nc = row + dr, col + dc
            if 0 <= nr < self.height and 0 <= nc < self.width:
                nloc = nr * self.width + nc
                if self.cells[nloc] is not CellKind.OBSTACLE:
                    out.append((move, nloc))
        return out

    def neighbors(self, loc):
        """In-bounds traversable 4-neighbors plus the Wait self-transition."""
        if not self.in_bounds(loc):
            raise ValueError(f"location {loc} out of bounds")
        if self.cells[loc] is CellKind.OBSTACLE:
            raise ValueError(f"location {loc} is an obstacle")
        return list(self._nbrs[loc]) + [(Move.WAIT, loc)]

    def move_between(self, a, b):
        """Move taking location a to adjacent (or equal) location b."""
        if a == b:
            return Move.WAIT
        for move, loc in self._nbrs[a]:
            if loc == b:
                return move
        raise ValueError(f"locations {a} and {b} are not adjacent")

    # -- derived metrics -----------------------------------------------

    def obstacle_density(self):
        total = self.width * self.height
        return sum(1 for k in self.cells if k is CellKind.OBSTACLE) / total

    def distance_field(self, goal):
        """Exact BFS distance from every traversable cell to goal.

        Unreachable cells hold float('inf'). Cached per goal.
        """
        cached = self._dist_fields.get(goal)
        if cached is not None:
            return cached
        if not self.is_traversable(goal):
            raise ValueError(f"goal {goal} is not traversable")
        inf = float("inf")
        dist = [inf] * (self.width * self.height)
        dist[goal] = 0
        frontier = [goal]
        nbrs = self._nbrs
        while frontier:
            nxt = []
            for loc in frontier:
                d = dist[loc] + 1
                for _, n in nbrs[loc]:
                    if dist[n] > d:
                        dist[n] = d
                        nxt.append(n)
            frontier = nxt
        self._dist_fields[goal] = dist
        return dist

    def static_diameter(self):
        """Max finite BFS distance between any two traversable cells."""
        if self._diameter:
            return self._diameter[0]
        best = 0
        for loc, k in enumerate(self.cells):
            if k is CellKind.OBSTACLE:
                continue
            field_ = self.distance_field(loc)
            m = max(d for d in field_ if d != float("inf"))
            if m > best:
                best = m
        self._diameter.append(best)
        return best


def manhattan(grid, a, b):
    if not grid.in_bounds(a) or not grid.in_bounds(b):
        raise ValueError("location out of bounds")
    ra, ca = divmod(a, grid.width)
    rb, cb = divmod(b, grid.width)
    return abs(ra - rb) + abs(ca - cb)


def neighbors(grid, loc):
    return grid.neighbors(loc)


def obstacle_density(grid):
    return grid.obstacle_density()


def parse_map(text):
    """Parse the textual map format into a GridMap.

    Format: ``height H`` / ``width W`` / ``map`` header lines, then H rows
    of W region characters.
    """
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines = lines[:-1]
    if len(lines) < 3:
        raise MapFormatError("missing header lines", line=len(lines) + 1)

    def header(idx, key):
        parts = lines[idx].split()
        if len(parts) != 2 or parts[0] != key:
            raise MapFormatError(f"expected '{key} <int>'", line=idx + 1)
        try:
            value = int(parts[1])
        except ValueError:
            raise MapFormatError(f"non-integer {key}", line=idx + 1) from None
        if value <= 0:
            raise MapFormatError(f"{key} must be positive", line=idx + 1)
        if lines[idx] != f"{key} {parts[1]}":
            raise MapFormatError("trailing whitespace forbidden", line=idx + 1)
        return value

    height = header(0, "height")
    width = header(1, "width")
    if lines[2] != "map":
        raise MapFormatError("expected 'map' line", line=3)
    if len(lines) != 3 + height:
        raise MapFormatError(
            f"expected {height} map rows, found {len(lines) - 3}", line=len(lines) + 1
        )
    cells = []
    for r in range(height):
        row = lines[3 + r]
        if len(row) != width:
            raise MapFormatError(
                f"row has {len(row)} characters, expected {width}",
                line=4 + r,
                column=min(len(row), width) + 1,
            )
        for c, ch in enumerate(row):
            kind = _CHAR_TO_KIND.get(ch)
            if kind is None:
                raise MapFormatError(f"unknown cell character {ch!r}", line=4 + r, column=c + 1)
            cells.append(kind)
    return GridMap(width=width, height=height, cells=tuple(cells))


def render(grid):
    """Inverse of parse_map."""
    rows = []
    for r in range(grid.height):
        start = r * grid.width
        rows.append("".join(k.value for k in grid.cells[start : start + grid.width]))
    return f"height {grid.height}\nwidth {grid.width}\nmap\n" + "\n".join(rows) + "\n"
