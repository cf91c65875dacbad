"""Synthetic scenarios: straight-line templates and model-generated "real" data.

Templates give every agent a start, a goal and a constant desired speed.
``planted_scenario`` runs the simulator on a template with known parameters
and stores its output as the recorded trajectories, so calibration has a
ground truth to recover.
"""

from __future__ import annotations

import math

import numpy as np

from .params import GameParams, SfmParams
from .scenario import AgentKind, AgentTrack, InputProfile, Scenario
from .simulation import SimConfig, run

GRID = 0.5


def straight_track(agent_id, kind, start, goal, speed, dt=GRID, t0=0.0, radius=None, pad=4) -> AgentTrack:
    """Constant-speed track from ``start`` to ``goal``, held at the goal for ``pad`` samples."""
    a = np.asarray(start, dtype=float)
    b = np.asarray(goal, dtype=float)
    length = float(np.linalg.norm(b - a))
    n = max(1, int(math.ceil(length / (speed * dt))))
    t = np.arange(n + 1 + pad) * dt
    s = np.minimum(t * speed / max(length, 1e-12), 1.0)
    if radius is None:
        radius = 0.3 if kind is AgentKind.PEDESTRIAN else 1.0
    return AgentTrack(agent_id, kind, a + (b - a) * s[:, None], dt, t0, radius)


def template(scenario_id, agents, dataset="synthetic", obstacles=(), pad=4) -> Scenario:
    """``agents``: iterable of ``(id, kind, start, goal, speed[, t0])``."""
    tracks, profiles = [], {}
    for row in agents:
        aid, kind, start, goal, speed = row[:5]
        t0 = row[5] if len(row) > 5 else 0.0
        kind = AgentKind(kind) if not isinstance(kind, AgentKind) else kind
        tracks.append(straight_track(aid, kind, start, goal, speed, t0=t0, pad=pad))
        profiles[aid] = InputProfile(np.asarray(start, dtype=float), np.asarray(goal, dtype=float), float(speed))
    return Scenario(scenario_id, dataset, tuple(tracks), tuple(obstacles), profiles=profiles)


def crossing_scenario(scenario_id="crossing", car_speed=5.0, ped_speed=1.3, pad=30) -> Scenario:
    """A car driving along +x past a pedestrian crossing its lane."""
    return template(
        scenario_id,
        [
            (1, AgentKind.CAR, (-30.0, 0.0), (30.0, 0.0), car_speed),
            (2, AgentKind.PEDESTRIAN, (0.0, -8.0), (0.0, 8.0), ped_speed),
        ],
        pad=pad,
    )


def random_template(scenario_id, rng: np.random.Generator, n_peds=(3, 5), n_cars=1, extent=14.0) -> Scenario:
    """Pedestrians crossing a square area in random directions with one or more cars passing through."""
    rows = []
    aid = 1
    for _ in range(n_cars):
        y = rng.uniform(-3.0, 3.0)
        sign = 1.0 if rng.random() < 0.5 else -1.0
        speed = rng.uniform(3.0, 5.0)
        t0 = float(np.round(rng.uniform(0.0, 2.0) / GRID) * GRID)
        rows.append((aid, AgentKind.CAR, (-sign * 30.0, y), (sign * 30.0, y), speed, t0))
        aid += 1
    n = int(rng.integers(n_peds[0], n_peds[1] + 1))
    for _ in range(n):
        ang = rng.uniform(0, 2 * math.pi)
        start = extent * np.array([math.cos(ang), math.sin(ang)])
        goal = -start + rng.normal(0.0, 3.0, 2)
        speed = rng.uniform(1.0, 1.5)
        t0 = float(np.round(rng.uniform(0.0, 3.0) / GRID) * GRID)
        rows.append((aid, AgentKind.PEDESTRIAN, tuple(start), tuple(goal), speed, t0))
        aid += 1
    return template(scenario_id, rows, pad=40)


def planted_scenario(tmpl: Scenario, sfm: SfmParams, game: GameParams, config: SimConfig = SimConfig(),
                     agent_params=None, seed: int = 0) -> Scenario:
    """Replace the template's tracks with the simulator's output under the given parameters.

    Each recorded track keeps the template's timestamps up to the agent's
    arrival; agents with fewer than two samples keep their template track.
    """
    res = run(tmpl, sfm, game, seed=seed, config=config, agent_params=agent_params)
    tracks = []
    for tr in tmpl.tracks:
        sim = res.tracks[tr.id]
        if len(sim.times) >= 2:
            tracks.append(AgentTrack(tr.id, tr.kind, sim.positions, tr.dt, float(sim.times[0]), tr.radius))
        else:
            tracks.append(tr)
    decisions = {k: v for k, v in res.decisions.items()}
    return Scenario(tmpl.id, tmpl.dataset, tuple(tracks), tmpl.obstacles, tmpl.pixel_to_meter,
                    geometry=tmpl.geometry, profiles=dict(tmpl.profiles), decisions=decisions)


def crossing_bundle(rng: np.random.Generator, n: int, prefix="x") -> list:
    """``n`` one-car, one-pedestrian crossing templates with jittered geometry and timing.

    A lone pedestrian per scene keeps its behaviour a function of its own
    parameters and the recorded car, which is what ghost replay reproduces.
    """
    out = []
    for i in range(n):
        rows = [(1, AgentKind.CAR, (-30.0, 0.0), (30.0, 0.0), float(rng.uniform(3.5, 5.0)), 0.0)]
        x = float(rng.uniform(-6.0, 10.0))
        s = 1.0 if rng.random() < 0.5 else -1.0
        goal = (x + float(rng.normal(0.0, 1.0)), 8.0 * s)
        t0 = float(np.round(rng.uniform(0.0, 3.0) / GRID) * GRID)
        rows.append((2, AgentKind.PEDESTRIAN, (x, -8.0 * s), goal, float(rng.uniform(1.1, 1.5)), t0))
        out.append(template(f"{prefix}{i}", rows, pad=30))
    return out
