import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from clusterrev.topology import (
    BorderCrossing,
    EnterGreyArea,
    GreyArea,
    GridError,
    LeaveGreyArea,
    Scripted,
    ScriptedEvent,
    VehicleItinerary,
    WalkParams,
    Waypoint,
    advance,
    build_grid,
    locate,
    owner,
    random_walk,
    validate_itinerary,
)

EXAMPLE_NAMES = {"RSU1-i1": "RSU1", "RSU1-2": "RSU2", "RSU1-i2": "RSU3", "RSU1-6": "RSU4", "RSU1-5": "RSU5"}


def example_grid():
    return build_grid(2, 3, 2000, 1, 2, [[2, 1, 5], [3, 6, 4]], EXAMPLE_NAMES)


def itin(vid, *wps, events=()):
    return VehicleItinerary(vid, tuple(Waypoint(*w) for w in wps), tuple(events))


def test_two_cells_share_one_guarded_edge():
    g = build_grid(1, 2)
    assert sorted(g.cells) == [1, 2]
    assert g.neighbors(1) == [2] and g.neighbors(2) == [1]
    assert len(g.guards(1, 2)) >= 1 and len(g.guards(2, 1)) >= 1


def test_interior_cell_has_four_neighbours():
    g = build_grid(3, 3)
    centre = g.layout[1][1]
    assert len(g.neighbors(centre)) == 4


def test_half_diagonal_leaves_grey_corners():
    g = build_grid(1, 1)
    cx, cy = g.cells[1].center
    far = max(math.dist((cx, cy), corner) for corner in [(0, 0), (0, 2000), (2000, 0), (2000, 2000)])
    assert 1414 < far < 1415
    assert far > g.coverage_radius_m


def test_locate():
    g = build_grid(1, 2)
    assert locate(g, (1000, 1000)) == 1
    assert isinstance(locate(g, (1, 1)), GreyArea)
    # shared edge midpoint is 1000 m from both centres
    assert locate(g, (2000, 1000)) == 1


def test_outside_grid_is_an_error():
    with pytest.raises(GridError):
        owner(build_grid(1, 1), (2500, 10))


def test_example_renames():
    g = example_grid()
    assert set(g.cells[1].rsus) == {"RSU1", "RSU2", "RSU3", "RSU4", "RSU5"}
    assert g.rsus["RSU4"].faces == 6 and g.rsus["RSU2"].faces == 2 and g.rsus["RSU5"].faces == 5
    assert g.facing(1) == ["RSU2-1", "RSU5-1", "RSU6-1"]
    assert g.neighbors(1) == [2, 5, 6]


def test_v25_crosses_at_rsu4():
    g = example_grid()
    events = advance(g, itin("V25", (0, 3000, 2500), (100, 3000, 1500)), 0, math.inf)
    assert events == [BorderCrossing(50.0, "V25", 6, 1, "RSU4")]


def test_stationary_vehicle_has_no_events():
    assert advance(example_grid(), itin("V7", (0, 3200, 1400)), 0, math.inf) == []


def test_diagonal_crossings_in_time_order():
    g = build_grid(2, 2)
    # through (1800, 1200) into the cell to the right, then up
    path = itin("V1", (0, 1000, 1000), (100, 2400, 1000), (200, 2400, 2600))
    crossings = [e for e in advance(g, path, 0, math.inf) if isinstance(e, BorderCrossing)]
    assert [e.at for e in crossings] == sorted(e.at for e in crossings)
    assert len(crossings) == 2


def test_window_is_half_open():
    g = example_grid()
    path = itin("V25", (0, 3000, 2500), (100, 3000, 1500))
    assert advance(g, path, 0, 50) == []
    assert len(advance(g, path, 50, 51)) == 1


def test_scripted_events_pass_through():
    ev = ScriptedEvent(5, "report_safety", (("body", "ice"),))
    out = advance(example_grid(), itin("V7", (0, 3200, 1400), events=[ev]), 0, math.inf)
    assert out == [Scripted(5, "V7", ev)]


def test_grey_entry_and_exit():
    g = build_grid(1, 1)
    out = advance(g, itin("V1", (0, 1000, 1000), (200, 100, 100), (400, 1000, 1000)), 0, math.inf)
    kinds = [type(e) for e in out]
    assert kinds == [EnterGreyArea, LeaveGreyArea]


def test_validation_names_vehicle():
    with pytest.raises(GridError, match="V42"):
        validate_itinerary(build_grid(1, 1), itin("V42", (0, 5000, 5000)))
    with pytest.raises(GridError, match="V42"):
        validate_itinerary(build_grid(1, 1), itin("V42", (0, 0, 0), (1, 1000, 0)))


# --- properties


points = st.tuples(st.floats(0, 6000), st.floats(0, 4000))


@given(points)
def test_locate_total_and_deterministic(p):
    g = example_grid()
    a, b = locate(g, p), locate(g, p)
    assert a == b
    cid = a.cell if isinstance(a, GreyArea) else a
    x0, y0, x1, y1 = g.cells[cid].bbox
    assert x0 <= p[0] <= x1 and y0 <= p[1] <= y1


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 3), st.integers(1, 3))
def test_random_walk_events_are_sound(seed, rows, cols):
    g = build_grid(rows, cols, rsus_per_border=2)
    walk = random_walk(g, "V1", 1, 600, random.Random(seed), WalkParams(park_probability=0.3))
    validate_itinerary(g, walk)
    events = advance(g, walk, 0, math.inf)
    assert events == advance(g, walk, 0, math.inf)
    times = [e.at for e in events]
    assert times == sorted(times)
    for e in events:
        if isinstance(e, BorderCrossing):
            guard = g.rsus[e.rsu]
            assert guard.role == "border" and guard.cluster == e.to_cluster and guard.faces == e.from_cluster
