import pytest

from rhpp.cli import load_map
from rhpp.grid import (
    CellKind,
    GridMap,
    MapFormatError,
    Move,
    manhattan,
    parse_map,
    render,
)

SMALL = "height 3\nwidth 4\nmap\n....\n.@e.\nh..i\n"


def test_parse_basic_fields():
    g = parse_map(SMALL)
    assert (g.height, g.width) == (3, 4)
    assert g.kind(5) is CellKind.OBSTACLE
    assert g.kind(6) is CellKind.ENDPOINT
    assert g.kind(8) is CellKind.HOME
    assert g.kind(11) is CellKind.INBOUND
    assert not g.is_traversable(5)
    assert g.is_traversable(6)


def test_parse_rejects_bad_header():
    with pytest.raises(MapFormatError):
        parse_map("width 4\nheight 3\nmap\n....\n....\n....\n")


def test_parse_rejects_row_length():
    with pytest.raises(MapFormatError) as exc:
        parse_map("height 2\nwidth 3\nmap\n...\n....\n")
    assert exc.value.line == 5


def test_parse_rejects_unknown_char():
    with pytest.raises(MapFormatError) as exc:
        parse_map("height 1\nwidth 3\nmap\n.x.\n")
    assert exc.value.column == 2


def test_parse_rejects_missing_rows():
    with pytest.raises(MapFormatError):
        parse_map("height 3\nwidth 3\nmap\n...\n...\n")


def test_render_round_trips():
    g = parse_map(SMALL)
    assert parse_map(render(g)).cells == g.cells


def test_neighbor_order_up_down_left_right():
    g = parse_map("height 3\nwidth 3\nmap\n...\n...\n...\n")
    center = 4
    moves = [mv for mv, _ in g.neighbors(center)]
    assert moves == [Move.UP, Move.DOWN, Move.LEFT, Move.RIGHT, Move.WAIT]
    locs = [loc for _, loc in g.neighbors(center)]
    assert locs == [1, 7, 3, 5, 4]


def test_neighbors_skip_obstacles_and_edges():
    g = parse_map(SMALL)
    # cell 4 (row 1, col 0): up 0, down 8; right is the obstacle at 5
    assert [loc for _, loc in g.neighbors(4)] == [0, 8, 4]


def test_move_between():
    g = parse_map(SMALL)
    assert g.move_between(4, 0) is Move.UP
    assert g.move_between(0, 4) is Move.DOWN
    assert g.move_between(1, 0) is Move.LEFT
    assert g.move_between(0, 1) is Move.RIGHT
    assert g.move_between(0, 0) is Move.WAIT
    with pytest.raises(ValueError):
        g.move_between(0, 5)


def test_distance_field_routes_around_obstacles():
    g = parse_map(SMALL)
    field = g.distance_field(6)  # endpoint right of the obstacle
    assert field[6] == 0
    assert field[4] == 4  # must detour over row 0 or row 2
    assert field[5] >= 10**8  # obstacle itself unreachable


def test_manhattan():
    g = parse_map(SMALL)
    assert manhattan(g, 0, 11) == 2 + 3


def test_static_diameter_positive():
    g = parse_map(SMALL)
    assert g.static_diameter() >= 5


def test_obstacle_density():
    g = parse_map(SMALL)
    assert g.obstacle_density() == pytest.approx(1 / 12)


@pytest.mark.parametrize("name", ["amazon", "symbotic", "desk10", "train8"])
def test_bundled_maps_parse_and_connect(name):
    g, text = load_map(name)
    assert isinstance(g, GridMap)
    free = [i for i in range(g.width * g.height) if g.is_traversable(i)]
    field = g.distance_field(free[0])
    assert all(field[c] < 10**8 for c in free), "free space must be connected"
