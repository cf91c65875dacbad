import math

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sharedspace.planner import (
    PlanningError,
    build_visibility_graph,
    plan,
    plan_path,
    segment_free,
)
from sharedspace.scenario import Obstacle


def square(cx, cy, h, oid=0):
    return Obstacle(oid, [[cx - h, cy - h], [cx + h, cy - h], [cx + h, cy + h], [cx - h, cy + h]])


def dijkstra_length(graph):
    g = nx.Graph()
    for a, nbrs in graph.edges.items():
        for b, w in nbrs:
            g.add_edge(a, b, weight=w)
    return nx.dijkstra_path_length(g, graph.origin, graph.destination)


def test_empty_environment():
    g = build_visibility_graph([], (0, 0), (10, 0))
    assert len(g.nodes) == 2 and g.n_edges == 1
    p = plan_path(g)
    assert p.waypoints == ((0.0, 0.0), (10.0, 0.0))
    assert p.length == 10.0


def test_square_blocks_direct_edge():
    g = build_visibility_graph([square(5, 0, 1)], (0, 0), (10, 0))
    assert not g.has_edge(0, 1)
    for corner in [(4, -1), (6, -1), (6, 1), (4, 1)]:
        assert corner in g.nodes


def test_path_around_square_matches_dijkstra():
    g = build_visibility_graph([square(5, 0, 0.5)], (0, 0), (10, 0))
    p = plan_path(g)
    assert p.length == pytest.approx(dijkstra_length(g), abs=1e-12)
    assert len(p.waypoints) > 2
    expected = math.hypot(4.5, 0.5) * 2 + 1.0
    assert p.length == pytest.approx(expected)


def test_destination_inside_obstacle():
    with pytest.raises(PlanningError):
        build_visibility_graph([square(10, 0, 1)], (0, 0), (10, 0))


def test_enclosed_destination_is_unreachable():
    ring = Obstacle(0, [[-3, -3], [3, -3], [3, 3], [-3, 3], [-3, -3]], closed=False)
    with pytest.raises(PlanningError, match="unreachable"):
        plan([ring], (-10, 0), (0, 0))


def test_clearance_inflates_obstacles():
    g = build_visibility_graph([square(5, 0, 1)], (0, 0), (10, 0), clearance=0.3)
    ys = sorted({round(n[1], 6) for n in g.nodes[2:]})
    assert ys == [-1.3, 1.3]


def test_equal_paths_tie_break_is_deterministic():
    # symmetric obstacle: going above or below costs the same
    a = plan([square(5, 0, 1)], (0, 0), (10, 0))
    b = plan([square(5, 0, 1)], (0, 0), (10, 0))
    assert a.waypoints == b.waypoints


def test_car_paths_are_smoothed():
    obs = [square(5, 0, 1)]
    raw = plan(obs, (0, 0), (10, 0))
    smooth = plan(obs, (0, 0), (10, 0), smooth=True)
    assert len(smooth.waypoints) <= len(raw.waypoints)
    assert smooth.length <= raw.length + 1e-12


boxes = st.lists(
    st.tuples(st.floats(2, 18), st.floats(-6, 6), st.floats(0.3, 2.0)), min_size=1, max_size=4
)


def _instance(specs):
    obs = [square(x, y, h, k) for k, (x, y, h) in enumerate(specs)]
    return obs, (0.0, 0.0), (20.0, 0.0)


@settings(max_examples=40, deadline=None)
@given(boxes)
def test_astar_matches_dijkstra(specs):
    obs, o, d = _instance(specs)
    try:
        g = build_visibility_graph(obs, o, d)
    except PlanningError:
        return
    try:
        p = plan_path(g)
    except PlanningError:
        with pytest.raises(nx.NetworkXNoPath):
            dijkstra_length(g)
        return
    assert p.length == pytest.approx(dijkstra_length(g), rel=1e-9, abs=1e-9)
    assert p.length >= 20.0 - 1e-9
    for a, b in zip(p.waypoints, p.waypoints[1:]):
        assert segment_free(a, b, g.shapes)


@settings(max_examples=30, deadline=None)
@given(boxes, st.tuples(st.floats(2, 18), st.floats(-6, 6), st.floats(0.3, 2.0)))
def test_adding_an_obstacle_never_shortens(specs, extra):
    obs, o, d = _instance(specs)
    more = obs + [square(*extra, len(obs))]
    try:
        before = plan(obs, o, d).length
        after = plan(more, o, d).length
    except PlanningError:
        return
    assert after >= before - 1e-9
