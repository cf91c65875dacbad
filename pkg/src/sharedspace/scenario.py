"""Agents, recorded tracks, obstacles and scenario files.

A scenario lives in two files: a trajectory CSV with one row per
(agent, timestep) and a JSON companion holding the metadata::

    agent_id,kind,t,x,y
    1,ped,0.0,3.5,2.0
    ...

The companion is looked up next to the CSV (``<stem>.json``).
"""

from __future__ import annotations

import csv
import enum
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .geometry import headings_from_positions

log = logging.getLogger(__name__)

DATASET_TAGS = ("HBS", "DUT", "CITR", "synthetic")


class ScenarioError(ValueError):
    """Raised for malformed trajectory or metadata files."""


class AgentKind(str, enum.Enum):
    PEDESTRIAN = "ped"
    CAR = "car"

    @classmethod
    def parse(cls, text: str) -> "AgentKind":
        try:
            return cls(text.strip().lower())
        except ValueError:
            raise ScenarioError(f"unknown agent kind {text!r}") from None


@dataclass(frozen=True)
class Geometry:
    """Body sizes in meters. Cars are discs for forces, rectangles for collisions."""

    ped_radius: float = 0.3
    car_radius: float = 1.0
    car_length: float = 4.0
    car_width: float = 1.8

    def radius(self, kind: AgentKind) -> float:
        return self.ped_radius if kind is AgentKind.PEDESTRIAN else self.car_radius


@dataclass(frozen=True, eq=False)
class AgentTrack:
    id: int
    kind: AgentKind
    positions: np.ndarray
    dt: float
    t0: float = 0.0
    radius: float = 0.3

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 2:
            raise ScenarioError(f"agent {self.id}: positions must be (n, 2)")
        if len(pos) < 2:
            raise ScenarioError(f"agent {self.id}: need at least 2 positions")
        if not np.all(np.isfinite(pos)):
            raise ScenarioError(f"agent {self.id}: non-finite position")
        if not self.dt > 0:
            raise ScenarioError("dt must be positive")
        if not self.radius > 0:
            raise ScenarioError(f"agent {self.id}: radius must be positive")
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self.positions))

    @property
    def t_end(self) -> float:
        return self.t0 + self.dt * (len(self.positions) - 1)

    @property
    def speeds(self) -> np.ndarray:
        return np.linalg.norm(np.diff(self.positions, axis=0), axis=1) / self.dt

    @property
    def headings(self) -> np.ndarray:
        return headings_from_positions(self.positions)

    def position_at(self, t: float) -> np.ndarray:
        """Linear interpolation, clamped to the ends of the track."""
        s = (t - self.t0) / self.dt
        if s <= 0:
            return self.positions[0].copy()
        n = len(self.positions) - 1
        if s >= n:
            return self.positions[-1].copy()
        k = int(math.floor(s))
        w = s - k
        return (1.0 - w) * self.positions[k] + w * self.positions[k + 1]

    def velocity_at(self, t: float) -> np.ndarray:
        s = (t - self.t0) / self.dt
        n = len(self.positions) - 1
        k = min(max(int(math.floor(s)), 0), n - 1)
        return (self.positions[k + 1] - self.positions[k]) / self.dt


@dataclass(frozen=True)
class Obstacle:
    id: int
    vertices: np.ndarray
    closed: bool = True

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 2:
            raise ScenarioError(f"obstacle {self.id}: need at least 2 vertices")
        if self.closed and len(v) < 3:
            object.__setattr__(self, "closed", False)
        object.__setattr__(self, "vertices", v)


@dataclass(frozen=True)
class InputProfile:
    start: np.ndarray
    destination: np.ndarray
    desired_speed: float
    flagged: bool = False

    def __post_init__(self):
        if not (self.desired_speed > 0 and math.isfinite(self.desired_speed)):
            raise ScenarioError("desired speed must be positive")
        if not np.all(np.isfinite(self.destination)):
            raise ScenarioError("destination must be finite")


@dataclass(frozen=True, eq=False)
class Scenario:
    id: str
    dataset: str
    tracks: tuple
    obstacles: tuple = ()
    pixel_to_meter: float = 1.0
    bounds: Optional[tuple] = None
    geometry: Geometry = field(default_factory=Geometry)
    # explicit input profiles override the estimators (planted data)
    profiles: dict = field(default_factory=dict)
    # annotated real decisions for complex conflicts, agent id -> strategy name
    decisions: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.tracks:
            raise ScenarioError("no agents")
        ids = [t.id for t in self.tracks]
        if len(set(ids)) != len(ids):
            raise ScenarioError("duplicate track ids")
        if not self.pixel_to_meter > 0:
            raise ScenarioError("pixel_to_meter must be positive")
        if self.bounds is None:
            allpos = np.vstack([t.positions for t in self.tracks])
            lo, hi = allpos.min(axis=0), allpos.max(axis=0)
            object.__setattr__(self, "bounds", (float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])))
        else:
            x0, y0, x1, y1 = self.bounds
            for t in self.tracks:
                p = t.positions
                if (p[:, 0] < x0).any() or (p[:, 0] > x1).any() or (p[:, 1] < y0).any() or (p[:, 1] > y1).any():
                    raise ScenarioError(f"agent {t.id} leaves the scenario bounds")

    @property
    def dt(self) -> float:
        return self.tracks[0].dt

    def track(self, agent_id: int) -> AgentTrack:
        for t in self.tracks:
            if t.id == agent_id:
                return t
        raise KeyError(agent_id)

    def pedestrians(self):
        return [t for t in self.tracks if t.kind is AgentKind.PEDESTRIAN]

    def cars(self):
        return [t for t in self.tracks if t.kind is AgentKind.CAR]


# --------------------------------------------------------------------------
# input profile estimation


def estimate_destination(track: AgentTrack, l_des: float = 5.0, normalized: bool = False) -> np.ndarray:
    """Destination beyond the last observed point.

    The default multiplies the start-to-end displacement by ``l_des``; with
    ``normalized=True`` the start is extended by ``l_des`` meters along the
    start-to-end direction instead.
    """
    x_st = track.positions[0]
    x_gt = track.positions[-1]
    disp = x_gt - x_st
    dist = float(np.hypot(*disp))
    if dist == 0.0:
        raise ScenarioError(f"agent {track.id}: zero displacement")
    if normalized:
        return x_st + l_des * disp / dist
    return x_st + l_des * disp


def estimate_desired_speed_pedestrian(track: AgentTrack, v_walk: float = 0.8):
    """Mean of the walking-portion speeds. Returns ``(speed, flagged)``.

    When no sample exceeds ``v_walk`` the overall mean is returned and the
    flag is set.
    """
    if track.kind is not AgentKind.PEDESTRIAN:
        raise ScenarioError(f"agent {track.id} is not a pedestrian")
    speeds = track.speeds
    walking = speeds[speeds > v_walk]
    if walking.size == 0:
        return float(speeds.mean()), True
    return float(walking.mean()), False


def estimate_desired_speed_car(track: AgentTrack) -> float:
    if track.kind is not AgentKind.CAR:
        raise ScenarioError(f"agent {track.id} is not a car")
    speeds = track.speeds
    return float(speeds.mean() + 0.5 * speeds.std(ddof=0))


def input_profile(
    track: AgentTrack,
    l_des: float = 5.0,
    v_walk: float = 0.8,
    normalized_destination: bool = False,
) -> InputProfile:
    """Start, destination and desired speed derived from a recorded track."""
    start = track.positions[0].copy()
    flagged = False
    try:
        dest = estimate_destination(track, l_des, normalized_destination)
    except ScenarioError:
        dest, flagged = start.copy(), True
    if track.kind is AgentKind.PEDESTRIAN:
        v_d, slow = estimate_desired_speed_pedestrian(track, v_walk)
        flagged = flagged or slow
    else:
        v_d = estimate_desired_speed_car(track)
    if not v_d > 0:
        v_d, flagged = 1e-3, True
    return InputProfile(start, dest, v_d, flagged)


# --------------------------------------------------------------------------
# file IO


def _metadata_path(source: Path) -> Path:
    return source.with_suffix(".json")


def load_trajectories(source, format: Optional[str] = None, metadata=None) -> Scenario:
    """Read a trajectory CSV (and its JSON companion) into a :class:`Scenario`.

    ``format`` is the dataset tag; it overrides the tag in the metadata.
    """
    source = Path(source)
    if not source.exists():
        raise FileNotFoundError(source)
    meta_path = Path(metadata) if metadata else _metadata_path(source)
    meta = {}
    if meta_path.exists():
        with open(meta_path) as fh:
            meta = json.load(fh)
    dataset = format or meta.get("dataset", "synthetic")
    if dataset not in DATASET_TAGS:
        raise ScenarioError(f"unknown dataset tag {dataset!r}")
    scale = float(meta.get("pixel_to_meter", 1.0))
    apply_scale = meta.get("units", "px") != "m"
    geometry = Geometry(**meta.get("geometry", {}))

    rows: dict[int, list] = {}
    kinds: dict[int, AgentKind] = {}
    with open(source, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["agent_id", "kind", "t", "x", "y"]:
            raise ScenarioError("row 1: expected header agent_id,kind,t,x,y")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 5:
                raise ScenarioError(f"row {lineno}: expected 5 fields, got {len(row)}")
            try:
                aid = int(row[0])
                t, x, y = float(row[2]), float(row[3]), float(row[4])
            except ValueError:
                raise ScenarioError(f"row {lineno}: malformed number") from None
            try:
                kind = AgentKind.parse(row[1])
            except ScenarioError as exc:
                raise ScenarioError(f"row {lineno}: {exc}") from None
            if not all(map(math.isfinite, (t, x, y))):
                raise ScenarioError(f"row {lineno}: non-finite value")
            if aid in kinds and kinds[aid] is not kind:
                raise ScenarioError(f"row {lineno}: agent {aid} changes kind")
            kinds[aid] = kind
            prev = rows.setdefault(aid, [])
            if prev and t <= prev[-1][0]:
                raise ScenarioError(f"row {lineno}: non-monotone timestamp for agent {aid}")
            prev.append((t, x, y, lineno))
    if not rows:
        raise ScenarioError("no agents")

    dt = meta.get("dt")
    if dt is None:
        for samples in rows.values():
            if len(samples) >= 2:
                dt = samples[1][0] - samples[0][0]
                break
    dt = float(dt) if dt is not None else 0.0
    if not dt > 0:
        raise ScenarioError("cannot determine a positive dt")

    tracks = []
    for aid, samples in rows.items():
        times = np.array([s[0] for s in samples])
        steps = np.diff(times)
        bad = np.nonzero(np.abs(steps - dt) > 1e-6 * max(1.0, dt))[0]
        if bad.size:
            raise ScenarioError(f"row {samples[bad[0] + 1][3]}: irregular sampling for agent {aid}")
        pos = np.array([(s[1], s[2]) for s in samples])
        if apply_scale:
            pos = pos * scale
        tracks.append(
            AgentTrack(aid, kinds[aid], pos, dt, float(times[0]), geometry.radius(kinds[aid]))
        )

    obstacles = []
    for k, poly in enumerate(meta.get("obstacles", [])):
        if isinstance(poly, dict):
            verts, closed = poly["vertices"], poly.get("closed", True)
        else:
            verts, closed = poly, True
        v = np.asarray(verts, dtype=float)
        if apply_scale:
            v = v * scale
        obstacles.append(Obstacle(k, v, closed))

    profiles = {}
    for key, prof in meta.get("profiles", {}).items():
        profiles[int(key)] = InputProfile(
            np.asarray(prof["start"], dtype=float),
            np.asarray(prof["destination"], dtype=float),
            float(prof["desired_speed"]),
        )
    bounds = meta.get("bounds")
    if bounds is not None:
        bounds = tuple(float(b) * (scale if apply_scale else 1.0) for b in bounds)
    return Scenario(
        id=str(meta.get("id", source.stem)),
        dataset=dataset,
        tracks=tuple(tracks),
        obstacles=tuple(obstacles),
        pixel_to_meter=scale,
        bounds=bounds,
        geometry=geometry,
        profiles=profiles,
        decisions={int(k): v for k, v in meta.get("decisions", {}).items()},
    )


def scenario_metadata(scenario: Scenario) -> dict:
    g = scenario.geometry
    meta = {
        "id": scenario.id,
        "dataset": scenario.dataset,
        "dt": scenario.dt,
        "pixel_to_meter": scenario.pixel_to_meter,
        "units": "m",
        "bounds": list(scenario.bounds),
        "geometry": {
            "ped_radius": g.ped_radius,
            "car_radius": g.car_radius,
            "car_length": g.car_length,
            "car_width": g.car_width,
        },
        "obstacles": [
            {"vertices": o.vertices.tolist(), "closed": o.closed} for o in scenario.obstacles
        ],
    }
    if scenario.profiles:
        meta["profiles"] = {
            str(k): {
                "start": p.start.tolist(),
                "destination": p.destination.tolist(),
                "desired_speed": p.desired_speed,
            }
            for k, p in sorted(scenario.profiles.items())
        }
    if scenario.decisions:
        meta["decisions"] = {str(k): v for k, v in sorted(scenario.decisions.items())}
    return meta


def write_tracks_csv(path, tracks) -> None:
    """Write tracks in the trajectory CSV schema (meters, ``repr`` floats)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["agent_id", "kind", "t", "x", "y"])
        for tr in tracks:
            for t, (x, y) in zip(tr.times, tr.positions):
                w.writerow([tr.id, tr.kind.value, repr(float(t)), repr(float(x)), repr(float(y))])


def write_scenario(scenario: Scenario, path) -> Path:
    """Write ``<path>`` (CSV) and its JSON companion. Positions are stored in meters."""
    path = Path(path)
    write_tracks_csv(path, scenario.tracks)
    with open(_metadata_path(path), "w") as fh:
        json.dump(scenario_metadata(scenario), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path
