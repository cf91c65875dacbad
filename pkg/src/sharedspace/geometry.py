"""Small 2-D vector helpers shared by the force, game and metric code.

Angles are degrees in [0, 360), measured counter-clockwise.
"""

from __future__ import annotations

import math

import numpy as np

EPS = 1e-12


def as_point(p) -> np.ndarray:
    return np.asarray(p, dtype=float).reshape(2)


def norm(v) -> float:
    return math.hypot(v[0], v[1])


def unit(v, fallback=None) -> np.ndarray:
    """Return ``v / |v|``; ``fallback`` (or the zero vector) when ``|v|`` is 0."""
    n = norm(v)
    if n < EPS:
        if fallback is None:
            return np.zeros(2)
        return np.asarray(fallback, dtype=float)
    return np.asarray(v, dtype=float) / n


def directed_angle(a, b) -> float:
    """Counter-clockwise angle from ``a`` to ``b`` in degrees, in [0, 360)."""
    cross = a[0] * b[1] - a[1] * b[0]
    dot = a[0] * b[0] + a[1] * b[1]
    ang = math.degrees(math.atan2(cross, dot)) % 360.0
    # atan2 of (-0.0, negative) returns -180 -> 180 after mod; keep 360.0 out
    return 0.0 if ang >= 360.0 else ang


def rotate(v, degrees: float) -> np.ndarray:
    th = math.radians(degrees)
    c, s = math.cos(th), math.sin(th)
    return np.array([c * v[0] - s * v[1], s * v[0] + c * v[1]])


def segments_intersect(p1, p2, q1, q2) -> bool:
    """Closed-segment intersection test (touching counts)."""

    def orient(a, b, c):
        val = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        if abs(val) < 1e-12:
            return 0
        return 1 if val > 0 else -1

    def on_seg(a, b, c):
        return (
            min(a[0], b[0]) - 1e-12 <= c[0] <= max(a[0], b[0]) + 1e-12
            and min(a[1], b[1]) - 1e-12 <= c[1] <= max(a[1], b[1]) + 1e-12
        )

    o1, o2 = orient(p1, p2, q1), orient(p1, p2, q2)
    o3, o4 = orient(q1, q2, p1), orient(q1, q2, p2)
    if o1 != o2 and o3 != o4:
        return True
    if o1 == 0 and on_seg(p1, p2, q1):
        return True
    if o2 == 0 and on_seg(p1, p2, q2):
        return True
    if o3 == 0 and on_seg(q1, q2, p1):
        return True
    if o4 == 0 and on_seg(q1, q2, p2):
        return True
    return False


def nearest_point_on_polyline(point, vertices: np.ndarray, closed: bool):
    """Nearest point on a polyline (or polygon boundary) and the segment index."""
    pts = np.asarray(vertices, dtype=float)
    a = pts
    b = np.roll(pts, -1, axis=0)
    if not closed:
        a, b = a[:-1], b[:-1]
    ab = b - a
    ap = np.asarray(point, dtype=float) - a
    denom = np.einsum("ij,ij->i", ab, ab)
    t = np.where(denom > EPS, np.einsum("ij,ij->i", ap, ab) / np.where(denom > EPS, denom, 1.0), 0.0)
    t = np.clip(t, 0.0, 1.0)
    proj = a + ab * t[:, None]
    d2 = np.einsum("ij,ij->i", point - proj, point - proj)
    k = int(np.argmin(d2))
    return proj[k], k


def point_in_polygon(point, vertices) -> bool:
    """Even-odd rule; boundary points may fall either way."""
    x, y = point
    inside = False
    n = len(vertices)
    for i in range(n):
        x1, y1 = vertices[i]
        x2, y2 = vertices[(i + 1) % n]
        if (y1 > y) != (y2 > y):
            xin = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if x < xin:
                inside = not inside
    return inside


def disc_overlaps_rectangle(center, radius, rect_center, heading, length, width) -> bool:
    """Strict overlap between a disc and an oriented rectangle."""
    e = unit(heading, fallback=(1.0, 0.0))
    n = np.array([-e[1], e[0]])
    rel = np.asarray(center, dtype=float) - np.asarray(rect_center, dtype=float)
    s, l = float(rel @ e), float(rel @ n)
    ds = max(abs(s) - length / 2.0, 0.0)
    dl = max(abs(l) - width / 2.0, 0.0)
    return math.hypot(ds, dl) < radius


def headings_from_positions(positions: np.ndarray) -> np.ndarray:
    """Unit headings per sample.

    The first sample copies the first non-zero displacement; zero-length steps
    carry the previous heading. A track that never moves gets (1, 0).
    """
    pos = np.asarray(positions, dtype=float)
    n = len(pos)
    out = np.zeros((n, 2))
    prev = None
    disp = np.diff(pos, axis=0)
    for d in disp:
        if norm(d) > EPS:
            prev = unit(d)
            break
    if prev is None:
        out[:] = (1.0, 0.0)
        return out
    out[0] = prev
    for k in range(1, n):
        d = disp[k - 1]
        if norm(d) > EPS:
            prev = unit(d)
        out[k] = prev
    return out
