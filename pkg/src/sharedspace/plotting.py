"""Small hand-written SVG plots (no rendering dependencies)."""

from __future__ import annotations

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf")


class _Canvas:
    def __init__(self, points, width=640, height=480, margin=30):
        pts = np.vstack([p for p in points if len(p)]) if points else np.zeros((1, 2))
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        span = np.maximum(hi - lo, 1e-9)
        self.scale = min((width - 2 * margin) / span[0], (height - 2 * margin) / span[1])
        self.lo, self.margin, self.w, self.h = lo, margin, width, height
        self.items = []

    def xy(self, p):
        x = self.margin + (p[0] - self.lo[0]) * self.scale
        y = self.h - self.margin - (p[1] - self.lo[1]) * self.scale
        return f"{x:.2f},{y:.2f}"

    def polyline(self, pts, color, dashed=False, width=1.5):
        if len(pts) < 2:
            return
        dash = ' stroke-dasharray="4,3"' if dashed else ""
        path = " ".join(self.xy(p) for p in pts)
        self.items.append(f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="{width}"{dash}/>')

    def polygon(self, pts, color):
        path = " ".join(self.xy(p) for p in pts)
        self.items.append(f'<polygon points="{path}" fill="{color}" fill-opacity="0.3" stroke="{color}"/>')

    def circle(self, p, color, r=3.0):
        x, y = self.xy(p).split(",")
        self.items.append(f'<circle cx="{x}" cy="{y}" r="{r}" fill="{color}"/>')

    def text(self, p, s, size=10):
        x, y = self.xy(p).split(",")
        self.items.append(f'<text x="{x}" y="{y}" font-size="{size}" font-family="sans-serif">{s}</text>')

    def svg(self, title=""):
        head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.w}" height="{self.h}" '
                f'viewBox="0 0 {self.w} {self.h}">\n')
        t = f"<title>{title}</title>\n" if title else ""
        return head + t + "\n".join(self.items) + "\n</svg>\n"


def trajectories_svg(scenario, sim_tracks: dict, title: str = "") -> str:
    """Recorded paths dotted, simulated paths solid, one colour per agent."""
    pts = [t.positions for t in scenario.tracks] + [t.positions for t in sim_tracks.values()]
    pts += [np.asarray(o.vertices) for o in scenario.obstacles]
    c = _Canvas(pts)
    for o in scenario.obstacles:
        if o.closed:
            c.polygon(o.vertices, "#777777")
        else:
            c.polyline(o.vertices, "#777777", width=3)
    for k, tr in enumerate(sorted(scenario.tracks, key=lambda t: t.id)):
        color = PALETTE[k % len(PALETTE)]
        c.polyline(tr.positions, color, dashed=True)
        sim = sim_tracks.get(tr.id)
        if sim is not None and len(sim.positions):
            c.polyline(sim.positions, color, width=2.0)
            c.circle(sim.positions[-1], color)
        c.text(tr.positions[0], f"{tr.kind.value} {tr.id}")
    return c.svg(title or scenario.id)


def clusters_svg(points, assignments, labels=("", ""), title: str = "") -> str:
    """2-D scatter of the first two columns of ``points`` coloured by group."""
    pts = np.asarray(points, dtype=float)
    if pts.shape[1] == 1:
        pts = np.column_stack([pts[:, 0], np.zeros(len(pts))])
    pts = pts[:, :2]
    c = _Canvas([pts])
    for p, g in zip(pts, assignments):
        c.circle(p, PALETTE[int(g) % len(PALETTE)], r=4.0)
    if labels[0]:
        c.text(pts.min(axis=0), f"x: {labels[0]}  y: {labels[1]}")
    return c.svg(title)
