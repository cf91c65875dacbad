"""Free-flow path planning: visibility graph over inflated obstacles plus A*."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np
from shapely.geometry import LineString, Point, Polygon
from shapely.prepared import prep


LINE_EPS = 1e-6


class PlanningError(ValueError):
    pass


@dataclass(frozen=True)
class VisibilityGraph:
    nodes: tuple  # tuple of (x, y)
    edges: dict  # node index -> tuple of (neighbour index, length)
    origin: int
    destination: int
    shapes: tuple = ()

    @property
    def n_edges(self) -> int:
        return sum(len(v) for v in self.edges.values()) // 2

    def has_edge(self, a: int, b: int) -> bool:
        return any(n == b for n, _ in self.edges.get(a, ()))


@dataclass(frozen=True)
class Path:
    waypoints: tuple
    length: float


def inflate(obstacles, clearance: float):
    """Shapely geometries for the obstacles grown by ``clearance``.

    Polygons keep their corners (mitred joins) so the graph stays small.
    Polylines always become thin polygons.
    """
    shapes = []
    for ob in obstacles:
        verts = [tuple(v) for v in np.asarray(ob.vertices, dtype=float)]
        if ob.closed:
            geom = Polygon(verts)
            if not geom.is_valid:
                raise PlanningError(f"obstacle {ob.id} is self-intersecting")
        else:
            geom = LineString(verts)
        # walls get a hairline thickness so paths cannot slip through their joints
        grow = clearance if ob.closed else max(clearance, LINE_EPS)
        if grow > 0:
            geom = geom.buffer(grow, join_style="mitre", cap_style="square", mitre_limit=2.0)
        shapes.append(geom)
    return tuple(shapes)


def _blocked(seg: LineString, shape) -> bool:
    if shape.geom_type in ("LineString", "MultiLineString"):
        return seg.crosses(shape)
    # any overlap between the open segment and the obstacle interior
    return seg.relate_pattern(shape, "T********")


def segment_free(a, b, shapes) -> bool:
    if a == b:
        return True
    seg = LineString([a, b])
    return not any(_blocked(seg, s) for s in shapes)


def _vertices(shape):
    if shape.geom_type == "Polygon":
        rings = [shape.exterior, *shape.interiors]
        for ring in rings:
            yield from list(ring.coords)[:-1]
    elif shape.geom_type == "MultiPolygon":
        for g in shape.geoms:
            yield from _vertices(g)
    else:
        yield from shape.coords


def _inside(p, shapes) -> bool:
    pt = Point(p)
    for s in shapes:
        if s.geom_type in ("Polygon", "MultiPolygon") and s.contains(pt):
            return True
    return False


def build_visibility_graph(obstacles, origin, destination, clearance: float = 0.0) -> VisibilityGraph:
    """Visibility graph over obstacle corners plus the two endpoints.

    Obstacles are inflated by ``clearance`` (the agent radius) first, so a
    point moving along the graph keeps a disc of that radius clear.
    """
    shapes = inflate(obstacles, clearance)
    origin = (float(origin[0]), float(origin[1]))
    destination = (float(destination[0]), float(destination[1]))
    for name, p in (("origin", origin), ("destination", destination)):
        if _inside(p, shapes):
            raise PlanningError(f"{name} {p} lies inside an obstacle")

    nodes = [origin, destination]
    seen = set(nodes)
    for s in shapes:
        for v in _vertices(s):
            v = (float(v[0]), float(v[1]))
            if v not in seen and not _inside(v, shapes):
                seen.add(v)
                nodes.append(v)

    prepared = [prep(s) for s in shapes]
    edges = {i: [] for i in range(len(nodes))}
    for i in range(len(nodes)):
        for j in range(i + 1, len(nodes)):
            a, b = nodes[i], nodes[j]
            seg = LineString([a, b])
            ok = True
            for s, ps in zip(shapes, prepared):
                if not ps.intersects(seg):
                    continue
                if _blocked(seg, s):
                    ok = False
                    break
            if ok:
                d = math.dist(a, b)
                edges[i].append((j, d))
                edges[j].append((i, d))
    return VisibilityGraph(
        tuple(nodes), {k: tuple(v) for k, v in edges.items()}, 0, 1, shapes
    )


def plan_path(graph: VisibilityGraph, origin=None, destination=None) -> Path:
    """A* with the straight-line heuristic.

    Equal-cost paths are resolved toward the lexicographically smallest
    node-index sequence.
    """
    nodes = graph.nodes
    src = graph.origin if origin is None else nodes.index(tuple(map(float, origin)))
    dst = graph.destination if destination is None else nodes.index(tuple(map(float, destination)))
    goal = nodes[dst]

    def h(i):
        return math.dist(nodes[i], goal)

    # heap entries carry the node sequence so ties fall to the smallest one
    heap = [(h(src), 0.0, (src,))]
    best = {src: 0.0}
    closed = set()
    while heap:
        f, g, seq = heapq.heappop(heap)
        u = seq[-1]
        if u in closed:
            continue
        if u == dst:
            return Path(tuple(nodes[k] for k in seq), g)
        closed.add(u)
        for v, w in graph.edges[u]:
            if v in closed:
                continue
            ng = g + w
            if ng <= best.get(v, math.inf) + 1e-12:
                best[v] = min(ng, best.get(v, math.inf))
                heapq.heappush(heap, (ng + h(v), ng, seq + (v,)))
    raise PlanningError("unreachable")


def smooth_path(path: Path, shapes) -> Path:
    """Drop waypoints whose removal keeps the shortcut obstacle-free."""
    pts = list(path.waypoints)
    if len(pts) <= 2:
        return path
    out = [pts[0]]
    i = 0
    while i < len(pts) - 1:
        j = len(pts) - 1
        while j > i + 1 and not segment_free(pts[i], pts[j], shapes):
            j -= 1
        out.append(pts[j])
        i = j
    length = sum(math.dist(a, b) for a, b in zip(out, out[1:]))
    return Path(tuple(out), length)


def plan(obstacles, origin, destination, clearance: float = 0.0, smooth: bool = False) -> Path:
    origin = (float(origin[0]), float(origin[1]))
    destination = (float(destination[0]), float(destination[1]))
    if not obstacles:
        return Path((origin, destination), math.dist(origin, destination))
    graph = build_visibility_graph(obstacles, origin, destination, clearance)
    path = plan_path(graph)
    return smooth_path(path, graph.shapes) if smooth else path
