"""Trajectory metrics: aADE, aFDE, SD and the collision index CI.

Each of the first three is scaled by ``k0 / k`` where ``k`` is the number of
aligned samples, so longer trajectories are not penalised for the natural
growth of displacement error over time.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .geometry import disc_overlaps_rectangle, headings_from_positions
from .scenario import AgentKind, Geometry

KINDS = (AgentKind.PEDESTRIAN, AgentKind.CAR)
CSV_COLUMNS = ("dataset", "variant", "kind", "aADE", "aFDE", "SD", "CI", "CI_adj", "n_agents", "n_scenarios")


class MetricsError(ValueError):
    pass


@dataclass(frozen=True)
class MetricsConfig:
    k0: int = 20
    dt: float = 0.5
    geometry: Geometry = Geometry()

    def __post_init__(self):
        if self.k0 < 1:
            raise ValueError("k0 must be at least 1")
        if not self.dt > 0:
            raise ValueError("dt must be positive")


def _pair(real, sim):
    real = np.asarray(real, dtype=float).reshape(-1, 2)
    sim = np.asarray(sim, dtype=float).reshape(-1, 2)
    if len(real) != len(sim):
        raise MetricsError(f"tracks are not aligned ({len(real)} vs {len(sim)} samples)")
    if len(real) == 0:
        raise MetricsError("zero-length overlap")
    return real, sim


def aade(real, sim, k0: int = 20) -> float:
    """Mean displacement error over aligned samples, times ``k0 / k``."""
    real, sim = _pair(real, sim)
    k = len(real)
    return (k0 / k) * float(np.mean(np.linalg.norm(real - sim, axis=1)))


def afde(real, sim, k0: int = 20) -> float:
    real, sim = _pair(real, sim)
    k = len(real)
    return (k0 / k) * float(np.linalg.norm(real[-1] - sim[-1]))


def speeds_from_positions(pos, dt: float) -> np.ndarray:
    """Forward-difference speeds; the last sample repeats the previous one."""
    pos = np.asarray(pos, dtype=float).reshape(-1, 2)
    if len(pos) < 2:
        raise MetricsError("need at least 2 samples for speeds")
    s = np.linalg.norm(np.diff(pos, axis=0), axis=1) / dt
    return np.append(s, s[-1])


def speed_deviation_from_speeds(real_speeds, sim_speeds, k0: int = 20) -> float:
    a = np.asarray(real_speeds, dtype=float).ravel()
    b = np.asarray(sim_speeds, dtype=float).ravel()
    if len(a) != len(b):
        raise MetricsError("speed profiles are not aligned")
    if len(a) == 0:
        raise MetricsError("zero-length overlap")
    return (k0 / len(a)) * float(np.mean(np.abs(a - b)))


def speed_deviation(real, sim, k0: int = 20, dt: float = 0.5) -> float:
    real, sim = _pair(real, sim)
    return speed_deviation_from_speeds(speeds_from_positions(real, dt), speeds_from_positions(sim, dt), k0)


def collision_fraction(ped, cars, radius: float = 0.3, geometry: Geometry = Geometry()) -> float:
    """Share of pedestrian samples whose disc overlaps any car rectangle.

    ``cars`` holds ``(positions, headings)`` pairs on the pedestrian's grid;
    rows with NaN positions mark samples where that car is absent.
    """
    ped = np.asarray(ped, dtype=float).reshape(-1, 2)
    if len(ped) == 0:
        return 0.0
    hits = 0
    for t in range(len(ped)):
        for pos, head in cars:
            if np.isnan(pos[t, 0]):
                continue
            if disc_overlaps_rectangle(ped[t], radius, pos[t], head[t], geometry.car_length, geometry.car_width):
                hits += 1
                break
    return hits / len(ped)


def collision_index(ped, cars, k0: int = 20, radius: float = 0.3, geometry: Geometry = Geometry()):
    """Return ``(raw fraction, fraction * k0 / k)``."""
    ped = np.asarray(ped, dtype=float).reshape(-1, 2)
    if len(ped) == 0:
        raise MetricsError("zero-length overlap")
    frac = collision_fraction(ped, cars, radius, geometry)
    return frac, frac * k0 / len(ped)


# --------------------------------------------------------------------------
# per-scenario evaluation


@dataclass
class AgentMetrics:
    id: int
    kind: AgentKind
    k: int
    aade: float
    afde: float
    sd: float
    ci: Optional[float] = None
    ci_adj: Optional[float] = None


@dataclass
class ScenarioMetrics:
    scenario_id: str
    agents: list

    def kind_means(self, kind: AgentKind) -> Optional[dict]:
        rows = [a for a in self.agents if a.kind is kind]
        if not rows:
            return None
        out = {
            "aADE": float(np.mean([a.aade for a in rows])),
            "aFDE": float(np.mean([a.afde for a in rows])),
            "SD": float(np.mean([a.sd for a in rows])),
        }
        if kind is AgentKind.PEDESTRIAN:
            out["CI"] = float(np.mean([a.ci for a in rows]))
            out["CI_adj"] = float(np.mean([a.ci_adj for a in rows]))
        out["n"] = len(rows)
        return out


def _aligned_real(real_track, times) -> np.ndarray:
    return np.array([real_track.position_at(t) for t in times]).reshape(-1, 2)


def _on_grid(sim_track, times) -> np.ndarray:
    """Sim positions at ``times``; NaN where the agent is absent."""
    out = np.full((len(times), 2), np.nan)
    st = sim_track.times
    if len(st) == 0:
        return out
    mask = (times >= st[0] - 1e-9) & (times <= st[-1] + 1e-9)
    out[mask, 0] = np.interp(times[mask], st, sim_track.positions[:, 0])
    out[mask, 1] = np.interp(times[mask], st, sim_track.positions[:, 1])
    return out


def evaluate_scenario(scenario, sim_tracks: dict, config: MetricsConfig = MetricsConfig()) -> ScenarioMetrics:
    """Metrics for every simulated (non-ghost) agent of one scenario.

    Tracks with fewer than two aligned samples are skipped.
    """
    rows = []
    cars = [t for t in sim_tracks.values() if t.kind is AgentKind.CAR and len(t.times)]
    for aid in sorted(sim_tracks):
        sim = sim_tracks[aid]
        if getattr(sim, "ghost", False) or len(sim.times) < 2:
            continue
        real = scenario.track(aid)
        real_pos = _aligned_real(real, sim.times)
        k0 = config.k0
        m = AgentMetrics(
            aid,
            sim.kind,
            len(sim.times),
            aade(real_pos, sim.positions, k0),
            afde(real_pos, sim.positions, k0),
            speed_deviation(real_pos, sim.positions, k0, config.dt),
        )
        if sim.kind is AgentKind.PEDESTRIAN:
            car_grid = []
            for c in cars:
                pos = _on_grid(c, sim.times)
                head = np.zeros_like(pos)
                ok = ~np.isnan(pos[:, 0])
                if ok.sum() >= 1:
                    full = headings_from_positions(c.positions)
                    head[ok, 0] = np.interp(sim.times[ok], c.times, full[:, 0])
                    head[ok, 1] = np.interp(sim.times[ok], c.times, full[:, 1])
                car_grid.append((pos, head))
            m.ci, m.ci_adj = collision_index(sim.positions, car_grid, k0, real.radius, config.geometry)
        rows.append(m)
    return ScenarioMetrics(scenario.id, rows)


@dataclass
class MetricsReport:
    dataset: str
    variant: str
    # kind value -> metric means (None when no agent of that kind was simulated)
    by_kind: dict
    scenarios: list = field(default_factory=list)

    def rows(self):
        for kind in KINDS:
            vals = self.by_kind.get(kind.value)
            yield kind.value, vals


def aggregate(per_scenario, dataset: str = "synthetic", variant: str = "GSFM_U") -> MetricsReport:
    """Average over agents within each scenario, then over scenarios."""
    per_scenario = list(per_scenario)
    if not per_scenario:
        raise MetricsError("need at least one scenario")
    by_kind = {}
    for kind in KINDS:
        means = [m for m in (s.kind_means(kind) for s in per_scenario) if m is not None]
        if not means:
            by_kind[kind.value] = None
            continue
        keys = ["aADE", "aFDE", "SD"] + (["CI", "CI_adj"] if kind is AgentKind.PEDESTRIAN else [])
        agg = {k: float(np.mean([m[k] for m in means])) for k in keys}
        agg["n_agents"] = int(sum(m["n"] for m in means))
        agg["n_scenarios"] = len(means)
        by_kind[kind.value] = agg
    return MetricsReport(dataset, variant, by_kind, per_scenario)


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    if isinstance(v, int):
        return str(v)
    return f"{v:.6f}"


def metrics_csv(reports) -> str:
    """Table-shaped CSV: one row per (dataset, variant, kind).

    Car rows leave the CI columns empty; a variant without simulated cars
    leaves every car column empty.
    """
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for rep in reports:
        for kind, vals in rep.rows():
            vals = vals or {}
            w.writerow([rep.dataset, rep.variant, kind] + [_fmt(vals.get(c)) for c in CSV_COLUMNS[3:]])
    return buf.getvalue()
