"""Deterministic scheduler: plan, detect conflicts, decide, act.

Each step runs conflict detection (every ``detect_interval`` seconds),
opens and solves games for complex pedestrian-car conflicts, collects the
candidate directives of every agent, keeps the highest-priority one and
integrates all agents against a snapshot of the previous state.
"""

from __future__ import annotations

import enum
import json
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import forces as F
from .forces import AgentState, Directive, DirectiveKind, Mode
from .game import (
    PayoffTable,
    StrategyKind,
    build_payoff_matrix,
    compute_features,
    select_leader,
    solve_strategies,
    strategy_directive,
)
from .geometry import norm, unit
from .params import GameParams, SfmParams
from .planner import inflate, plan, segment_free
from .scenario import AgentKind, AgentTrack, Scenario, input_profile

log = logging.getLogger(__name__)


class ConflictClass(str, enum.Enum):
    CAR_FOLLOWING = "CarFollowing"
    PED_PED = "PedPed"
    PED_CAR_REACTIVE = "PedCarReactive"
    PED_TO_CARS = "PedToCars"
    PEDS_TO_CAR = "PedsToCar"

    @property
    def is_complex(self) -> bool:
        return self in (ConflictClass.PED_TO_CARS, ConflictClass.PEDS_TO_CAR)


@dataclass
class Conflict:
    participants: tuple
    cls: ConflictClass
    detected_at: float
    collision_point: tuple = (math.nan, math.nan)
    collision_time: float = math.nan
    status: str = "Active"
    id: int = -1
    leader: Optional[int] = None
    strategies: dict = field(default_factory=dict)
    signature: Optional[tuple] = None


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.1
    detect_interval: float = 0.5
    horizon: float = 5.0
    completion_radius: float = 1.0
    games: bool = True
    car_rules: bool = True
    long_avoidance: bool = True
    ghosts: frozenset = frozenset()
    l_des: float = 5.0
    v_walk: float = 0.8
    normalized_destination: bool = False
    follow_cone: float = 45.0
    waypoint_reach: float = 0.5


@dataclass
class _Runtime:
    track: AgentTrack
    profile: object
    waypoints: tuple = ()
    wp_index: int = 1
    ghost: bool = False
    spawned: bool = False
    done: bool = False
    arrived_at: Optional[float] = None
    times: list = field(default_factory=list)
    xs: list = field(default_factory=list)


@dataclass
class SimTrack:
    id: int
    kind: AgentKind
    times: np.ndarray
    positions: np.ndarray
    done: bool
    partial: bool
    ghost: bool = False


@dataclass
class SimResult:
    scenario_id: str
    tracks: dict
    events: list
    decisions: dict

    def events_jsonl(self) -> str:
        return "".join(json.dumps(e, sort_keys=True) + "\n" for e in self.events)


class SimulationWorld:
    """Mutable simulation state. Build one with :func:`make_world`."""

    def __init__(self, scenario: Scenario, params: SfmParams, game_params: GameParams,
                 config: SimConfig, agent_params=None, table: Optional[PayoffTable] = None, seed: int = 0):
        self.scenario = scenario
        self.params = params
        self.game_params = game_params
        self.config = config
        self.agent_params = dict(agent_params or {})
        self.table = table or PayoffTable.load()
        self.seed = seed
        self.step_index = 0
        self.clock = 0.0
        self.t_start = 0.0
        self.obstacles = scenario.obstacles
        self.agents: dict[int, AgentState] = {}
        self.runtime: dict[int, _Runtime] = {}
        self.simple: dict = {}
        self.complex: list[Conflict] = []
        self.pair_first_seen: dict = {}
        self.events: list = []
        self.decisions: dict = {}
        self.directives: dict = {}
        self._next_conflict = 0
        self._shapes = {}

    # -- helpers -----------------------------------------------------------

    def params_for(self, agent_id: int) -> SfmParams:
        return self.agent_params.get(agent_id, self.params)

    def log(self, event: str, agent=None, **payload) -> None:
        self.events.append({"t": round(self.clock, 9), "agent": agent, "event": event, "payload": payload})

    def active_ids(self):
        return sorted(k for k, r in self.runtime.items() if r.spawned and not r.done)

    def conflict_of(self, agent_id: int) -> Optional[Conflict]:
        for c in self.complex:
            if agent_id in c.participants:
                return c
        return None

    def _shapes_for(self, radius: float):
        if radius not in self._shapes:
            self._shapes[radius] = inflate(self.obstacles, radius)
        return self._shapes[radius]


def make_world(scenario: Scenario, params: SfmParams, game_params: GameParams,
               config: SimConfig = SimConfig(), agent_params=None, table=None, seed: int = 0) -> SimulationWorld:
    """Create a world with every agent's input profile and planned path."""
    world = SimulationWorld(scenario, params, game_params, config, agent_params, table, seed)
    world.t_start = min(t.t0 for t in scenario.tracks)
    world.clock = world.t_start
    for tr in scenario.tracks:
        if tr.id in scenario.profiles:
            prof = scenario.profiles[tr.id]
        else:
            prof = input_profile(tr, config.l_des, config.v_walk, config.normalized_destination)
        rt = _Runtime(tr, prof, ghost=tr.id in config.ghosts)
        if not rt.ghost:
            path = plan(scenario.obstacles, prof.start, prof.destination,
                        clearance=tr.radius if scenario.obstacles else 0.0,
                        smooth=tr.kind is AgentKind.CAR)
            rt.waypoints = tuple(np.asarray(w, dtype=float) for w in path.waypoints)
        world.runtime[tr.id] = rt
    return world


# --------------------------------------------------------------------------
# conflict detection


def closest_approach(a: AgentState, b: AgentState, horizon: float):
    """Minimum centre distance over ``[0, horizon]`` under constant velocity."""
    p = b.position - a.position
    w = b.velocity - a.velocity
    ww = float(w @ w)
    t = 0.0 if ww < 1e-12 else min(max(-float(p @ w) / ww, 0.0), horizon)
    gap = norm(p + w * t)
    return gap, t, ww


def _corridor(car: AgentState, ped: AgentState, world) -> bool:
    g = world.scenario.geometry
    return F.in_front_corridor(car, ped.position, world.params_for(car.id).d_min_pc,
                               g.car_width / 2.0 + ped.radius, g.car_length)


def classify_pair(a: AgentState, b: AgentState, world, horizon: float):
    """Conflict class of one pair or ``None``; symmetric in ``a`` and ``b``."""
    params = world.params
    d = norm(a.position - b.position)
    if d > params.view_range:
        return None
    trigger = params.s_c * (a.radius + b.radius)
    gap, t, ww = closest_approach(a, b, horizon)
    if a.is_car and b.is_car:
        cos_cone = math.cos(math.radians(world.config.follow_cone))
        if float(a.heading @ b.heading) >= cos_cone and d < trigger:
            return ConflictClass.CAR_FOLLOWING, gap, t
        return None
    # only approaching pairs count; a receding pair has t == 0
    if gap >= trigger or t <= 0.0:
        return None
    if not a.is_car and not b.is_car:
        return ConflictClass.PED_PED, gap, t
    car, ped = (a, b) if a.is_car else (b, a)
    if _corridor(car, ped, world):
        return ConflictClass.PED_CAR_REACTIVE, gap, t
    return ConflictClass.PEDS_TO_CAR, gap, t


def detect_conflicts(world: SimulationWorld, horizon: Optional[float] = None) -> list:
    """Pairwise conflicts, with complex pedestrian-car pairs merged into
    connected groups classified by how many cars they hold."""
    horizon = world.config.horizon if horizon is None else horizon
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    ids = world.active_ids()
    out = []
    complex_pairs = []
    for k, i in enumerate(ids):
        a = world.agents[i]
        for j in ids[k + 1:]:
            b = world.agents[j]
            res = classify_pair(a, b, world, horizon)
            if res is None:
                continue
            cls, gap, t = res
            pa = a.position + a.velocity * t
            pb = b.position + b.velocity * t
            point = tuple(float(v) for v in (pa + pb) / 2.0)
            if cls.is_complex:
                complex_pairs.append(((i, j), point, t))
            else:
                out.append(Conflict((i, j), cls, world.clock, point, world.clock + t))
    # union-find over complex pairs
    parent = {}

    def find(x):
        while parent.setdefault(x, x) != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for (i, j), _, _ in complex_pairs:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    groups: dict = {}
    for (i, j), point, t in complex_pairs:
        g = groups.setdefault(find(i), {"members": set(), "pairs": []})
        g["members"].update((i, j))
        g["pairs"].append(((i, j), point, t))
    for root in sorted(groups):
        g = groups[root]
        members = tuple(sorted(g["members"]))
        n_cars = sum(world.agents[m].is_car for m in members)
        cls = ConflictClass.PED_TO_CARS if n_cars >= 2 else ConflictClass.PEDS_TO_CAR
        (_, point, t) = min(g["pairs"], key=lambda p: p[2])
        c = Conflict(members, cls, world.clock, point, world.clock + t)
        c.pairs = [p[0] for p in g["pairs"]]
        out.append(c)
    return out


# --------------------------------------------------------------------------
# conflict bookkeeping and games


def _open(world, c: Conflict) -> Conflict:
    c.id = world._next_conflict
    world._next_conflict += 1
    world.log("conflict_open", None, conflict=c.id, cls=c.cls.value, participants=list(c.participants))
    return c


def _resolve(world, c: Conflict) -> None:
    c.status = "Resolved"
    world.log("conflict_resolved", None, conflict=c.id, participants=list(c.participants))
    for aid in c.participants:
        if aid in world.agents and world.agents[aid].mode is Mode.GAME:
            world.agents[aid] = replace(world.agents[aid], mode=Mode.FREE_FLOW, strategy=None)


def _pair_features(world, c: Conflict, noai: dict):
    feats = {}
    leader = world.agents[c.leader]
    for f in c.participants:
        if f == c.leader:
            continue
        fa = world.agents[f]
        for a, b in ((leader, fa), (fa, leader)):
            last = world.directives.get(a.id)
            stopped = a.is_car and last is not None and last.kind in (DirectiveKind.STOP, DirectiveKind.DECELERATE)
            feats[(a.id, b.id)] = compute_features(a, b, world.game_params, noai=noai.get(a.id, 0), car_stopped=stopped)
    return feats


def _solve(world, c: Conflict, feats) -> None:
    leader = world.agents[c.leader]
    followers = [world.agents[f] for f in c.participants if f != c.leader]
    matrix = build_payoff_matrix(leader, followers, feats, world.game_params, world.table)
    strategies = solve_strategies(matrix)
    c.strategies = {k: v.value for k, v in strategies.items()}
    world.log("game_solved", c.leader, conflict=c.id, strategies={str(k): v for k, v in sorted(c.strategies.items())})
    for aid, s in sorted(c.strategies.items()):
        world.decisions.setdefault(aid, s)
        st = world.agents[aid]
        if st.mode is not Mode.GAME or st.strategy != s:
            world.log("mode", aid, mode="game", strategy=s)
        world.agents[aid] = replace(st, mode=Mode.GAME, strategy=s)


def update_conflicts(world: SimulationWorld) -> None:
    detected = detect_conflicts(world)
    for c in detected:
        for p in getattr(c, "pairs", [c.participants]):
            world.pair_first_seen.setdefault(tuple(sorted(p)), world.clock)

    # simple conflicts keyed by (class, pair)
    seen = {}
    for c in detected:
        if not c.cls.is_complex:
            seen[(c.cls, c.participants)] = c
    for key in sorted(set(world.simple) - set(seen), key=lambda k: (k[0].value, k[1])):
        _resolve(world, world.simple.pop(key))
    for key in sorted(set(seen) - set(world.simple), key=lambda k: (k[0].value, k[1])):
        world.simple[key] = _open(world, seen[key])

    noai = {}
    for c in detected:
        for a in c.participants:
            if world.agents[a].is_car:
                noai[a] = noai.get(a, 0) + (len(c.participants) - 1 if c.cls.is_complex else 1)

    if not world.config.games:
        return
    pairs = set()
    for c in detected:
        if c.cls.is_complex:
            pairs.update(tuple(sorted(p)) for p in c.pairs)

    active = set(world.active_ids())
    changed = set()
    kept = []
    for c in world.complex:
        members = [m for m in c.participants if m in active]
        live = {m for p in pairs if p[0] in members and p[1] in members for m in p}
        if c.leader not in live or len(live) < 2:
            _resolve(world, c)
            continue
        if set(live) != set(c.participants):
            for m in set(c.participants) - live:
                if m in world.agents and world.agents[m].mode is Mode.GAME:
                    world.agents[m] = replace(world.agents[m], mode=Mode.FREE_FLOW, strategy=None)
                    world.log("mode", m, mode="free_flow")
            c.participants = tuple(sorted(live))
            changed.add(c.id)
        kept.append(c)
    world.complex = kept

    owner = {m: c for c in world.complex for m in c.participants}
    free_pairs = []
    for p in sorted(pairs):
        a, b = p
        ca, cb = owner.get(a), owner.get(b)
        if ca is not None and cb is not None:
            continue
        if ca is not None or cb is not None:
            c = ca or cb
            new = b if ca is not None else a
            # cars only join as leaders of their own games; a second car is a follower
            c.participants = tuple(sorted(set(c.participants) | {new}))
            owner[new] = c
            changed.add(c.id)
            continue
        free_pairs.append(p)

    # remaining pairs between unassigned agents form new games
    for c in detected:
        if not c.cls.is_complex:
            continue
        members = {m for p in c.pairs if tuple(sorted(p)) in free_pairs for m in p}
        members -= set(owner)
        if len(members) < 2:
            continue
        states = [world.agents[m] for m in sorted(members)]
        if not any(s.is_car for s in states) or all(s.is_car for s in states):
            continue
        n_cars = sum(s.is_car for s in states)
        cls = ConflictClass.PED_TO_CARS if n_cars >= 2 else ConflictClass.PEDS_TO_CAR
        recog = None
        cars = [s.id for s in states if s.is_car]
        if len(cars) > 1:
            firsts = []
            for cid in cars:
                ts = [t for pr, t in world.pair_first_seen.items() if cid in pr and (set(pr) - {cid}) <= members]
                firsts.append((min(ts) if ts else math.inf, cid))
            recog = min(firsts)[1]
        nc = Conflict(tuple(sorted(members)), cls, world.clock, c.collision_point, c.collision_time)
        nc.leader = select_leader(states, recog)
        _open(world, nc)
        world.complex.append(nc)
        for m in members:
            owner[m] = nc
        changed.add(nc.id)

    for c in world.complex:
        if c.leader not in c.participants:
            c.leader = select_leader([world.agents[m] for m in c.participants])
        feats = _pair_features(world, c, noai)
        sig = tuple(sorted((k, v.signature()) for k, v in feats.items()))
        if c.id in changed or sig != c.signature:
            c.signature = sig
            _solve(world, c, feats)


# --------------------------------------------------------------------------
# directives


def prioritize(kind: AgentKind, candidates: dict) -> Directive:
    """Pick one directive from ``Mode -> Directive`` candidates.

    Cars: stop > game > follow > free flow. Pedestrians: game > free flow
    (with the longitudinal temporary goal folded into free flow).
    """
    order = (Mode.STOP, Mode.GAME, Mode.FOLLOW) if kind is AgentKind.CAR else (Mode.GAME,)
    for m in order:
        d = candidates.get(m)
        if d is not None:
            return d
    if kind is AgentKind.PEDESTRIAN and candidates.get(Mode.LONG) is not None:
        return candidates[Mode.LONG]
    return candidates.get(Mode.FREE_FLOW, F.FREE)


def _leader_car(world, car: AgentState) -> Optional[AgentState]:
    best = None
    for (cls, pair), c in world.simple.items():
        if cls is not ConflictClass.CAR_FOLLOWING or car.id not in pair:
            continue
        other = world.agents.get(pair[0] if pair[1] == car.id else pair[1])
        if other is None:
            continue
        ahead = float((other.position - car.position) @ car.heading)
        if ahead <= 0:
            continue
        if best is None or ahead < best[0]:
            best = (ahead, other)
    return None if best is None else best[1]


def candidate_directives(world, aid: int) -> dict:
    st = world.agents[aid]
    params = world.params_for(aid)
    cands = {}
    if world.config.games and st.mode is Mode.GAME and st.strategy is not None:
        c = world.conflict_of(aid)
        if c is not None:
            others = [world.agents[m] for m in c.participants if m != aid and m in world.agents]
            if aid == c.leader:
                opp = min(others, key=lambda o: (norm(o.position - st.position), o.id))
            else:
                opp = world.agents[c.leader]
            cands[Mode.GAME] = strategy_directive(st, StrategyKind(st.strategy), opp, params)
    if st.is_car and world.config.car_rules:
        peds = [world.agents[k] for k in world.active_ids() if not world.agents[k].is_car]
        stop = F.reactive_stop(st, peds, params, world.scenario.geometry)
        if stop is not None:
            cands[Mode.STOP] = stop
        leader = _leader_car(world, st)
        if leader is not None:
            cands[Mode.FOLLOW] = F.car_following(st, leader, params)
    if not st.is_car and world.config.long_avoidance and params.w_p:
        best = None
        for k in world.active_ids():
            o = world.agents[k]
            if not o.is_car:
                continue
            goal = F.longitudinal_avoidance(st, o, params)
            if goal is not None:
                d = norm(o.position - st.position)
                if best is None or d < best[0]:
                    best = (d, goal)
        if best is not None:
            g = best[1]
            cands[Mode.LONG] = Directive(DirectiveKind.FREE, Mode.LONG, point=(float(g[0]), float(g[1])))
    return cands


# --------------------------------------------------------------------------
# stepping


def _spawn(world, aid: int) -> None:
    rt = world.runtime[aid]
    tr = rt.track
    rt.spawned = True
    if rt.ghost:
        pos, vel = tr.position_at(world.clock), tr.velocity_at(world.clock)
        st = F.make_state(aid, tr.kind, pos, vel, tr.radius, rt.profile, heading=unit(vel, fallback=(1.0, 0.0)))
    else:
        start = np.asarray(rt.profile.start, dtype=float)
        target = rt.waypoints[1] if len(rt.waypoints) > 1 else rt.profile.destination
        direction = unit(np.asarray(target) - start, fallback=(1.0, 0.0))
        # agents start from rest and relax toward their desired velocity
        st = F.make_state(aid, tr.kind, start, np.zeros(2), tr.radius, rt.profile,
                          heading=direction, target=np.asarray(target, dtype=float))
    world.agents[aid] = st
    rt.times.append(world.clock)
    rt.xs.append(st.position.copy())
    world.log("spawn", aid, kind=tr.kind.value, ghost=rt.ghost)
    if not rt.ghost and norm(np.asarray(rt.profile.destination) - st.position) <= world.config.completion_radius:
        _finish(world, aid)


def _finish(world, aid: int) -> None:
    rt = world.runtime[aid]
    rt.done = True
    rt.arrived_at = world.clock
    c = world.conflict_of(aid)
    if c is not None:
        c.participants = tuple(m for m in c.participants if m != aid)
        if aid == c.leader or len(c.participants) < 2:
            world.complex.remove(c)
            _resolve(world, c)
    for key in [k for k in world.simple if aid in k[1]]:
        _resolve(world, world.simple.pop(key))
    world.agents.pop(aid, None)
    world.log("arrived" if not rt.ghost else "ghost_exit", aid)


def _advance_waypoint(world, aid: int, st: AgentState) -> AgentState:
    rt = world.runtime[aid]
    wps = rt.waypoints
    if len(wps) <= 2:
        return st
    k = rt.wp_index
    shapes = world._shapes_for(st.radius)
    while k < len(wps) - 1:
        if norm(wps[k] - st.position) <= world.config.waypoint_reach or segment_free(
            tuple(st.position), tuple(wps[k + 1]), shapes
        ):
            k += 1
        else:
            break
    if k != rt.wp_index:
        rt.wp_index = k
        st = replace(st, target=wps[k])
    return st


def step(world: SimulationWorld) -> SimulationWorld:
    """Advance the world by one ``dt``."""
    cfg = world.config
    interval = max(1, int(round(cfg.detect_interval / cfg.dt)))
    eps = 1e-9

    for aid, rt in sorted(world.runtime.items()):
        if not rt.spawned and rt.track.t0 <= world.clock + eps:
            _spawn(world, aid)
    for aid in world.active_ids():
        rt = world.runtime[aid]
        if rt.ghost:
            if world.clock > rt.track.t_end + eps:
                _finish(world, aid)
                continue
            st = world.agents[aid]
            vel = rt.track.velocity_at(world.clock)
            world.agents[aid] = replace(st, position=rt.track.position_at(world.clock), velocity=vel,
                                        heading=unit(vel, fallback=st.heading))

    if world.step_index % interval == 0 and world.agents:
        update_conflicts(world)

    snapshot = dict(world.agents)
    ids = world.active_ids()
    new_states = {}
    for aid in ids:
        rt = world.runtime[aid]
        if rt.ghost:
            continue
        st = snapshot[aid]
        params = world.params_for(aid)
        directive = prioritize(st.kind, candidate_directives(world, aid))
        world.directives[aid] = directive
        neighbors = [snapshot[k] for k in ids if k != aid]
        long_goal = directive.point if directive.source is Mode.LONG else None
        acc = F.compose_acceleration(
            st, neighbors, world.obstacles if not st.is_car else (), params,
            directive=directive if directive.source is not Mode.LONG else F.FREE,
            long_goal=long_goal,
            neighbor_params=world.agent_params,
        )
        if not (math.isfinite(acc[0]) and math.isfinite(acc[1])):
            raise F.NonFiniteStateError(_dump(world, aid, acc))
        # game membership is owned by the conflict bookkeeping
        mode = Mode.GAME if st.mode is Mode.GAME else directive.source
        nxt = F.integrate(st, acc, cfg.dt, params)
        # remember separation directions of close neighbours in case they coincide later
        normals = dict(st.last_normals)
        for n in neighbors:
            rel = nxt.position - n.position
            d = math.hypot(rel[0], rel[1])
            if 1e-12 < d < nxt.radius + n.radius + 1.0:
                normals[n.id] = rel / d
        nxt = replace(nxt, mode=mode, last_normals=normals)
        if mode is not st.mode:
            world.log("mode", aid, mode=mode.value)
        new_states[aid] = _advance_waypoint(world, aid, nxt)

    world.step_index += 1
    world.clock = world.t_start + world.step_index * cfg.dt
    for aid, st in new_states.items():
        world.agents[aid] = st
    for aid in ids:
        rt = world.runtime[aid]
        if rt.done:
            continue
        st = world.agents[aid]
        if rt.ghost:
            pos = rt.track.position_at(world.clock)
        else:
            pos = st.position
        rt.times.append(world.clock)
        rt.xs.append(np.array(pos, dtype=float))
        if not rt.ghost and norm(np.asarray(rt.profile.destination) - st.position) <= cfg.completion_radius:
            _finish(world, aid)
    return world


def _dump(world, aid, acc) -> str:
    states = {
        k: {"x": s.position.tolist(), "v": s.velocity.tolist(), "mode": s.mode.value}
        for k, s in sorted(world.agents.items())
    }
    return json.dumps({"t": world.clock, "agent": aid, "acceleration": list(map(float, acc)), "agents": states})


def _aligned(world, aid: int) -> SimTrack:
    rt = world.runtime[aid]
    tr = rt.track
    hist_t = np.asarray(rt.times)
    hist_x = np.asarray(rt.xs).reshape(-1, 2)
    real_t = tr.times
    if hist_t.size == 0:
        times = np.empty(0)
        pos = np.empty((0, 2))
    else:
        lo, hi = hist_t[0] - 1e-9, hist_t[-1] + 1e-9
        times = real_t[(real_t >= lo) & (real_t <= hi)]
        pos = np.column_stack([np.interp(times, hist_t, hist_x[:, 0]), np.interp(times, hist_t, hist_x[:, 1])])
    return SimTrack(aid, tr.kind, times, pos, rt.done and not rt.ghost, not rt.done and not rt.ghost, rt.ghost)


def run(scenario: Scenario, params: SfmParams, game_params: GameParams, seed: int = 0,
        duration: Optional[float] = None, config: SimConfig = SimConfig(), agent_params=None,
        table: Optional[PayoffTable] = None, world_hook=None) -> SimResult:
    """Simulate a scenario from the real starts; outputs sit on the real timestamps.

    ``duration`` defaults to the span of the recorded tracks. Agents that
    have not arrived when it runs out are returned with ``partial=True``.
    """
    world = make_world(scenario, params, game_params, config, agent_params, table, seed)
    if duration is None:
        duration = max(t.t_end for t in scenario.tracks) - world.t_start
    n_steps = int(math.ceil(duration / config.dt - 1e-9))
    for _ in range(n_steps):
        step(world)
        if world_hook is not None:
            world_hook(world)
        if all(r.done for r in world.runtime.values() if not r.ghost) and all(r.spawned for r in world.runtime.values()):
            break
    tracks = {aid: _aligned(world, aid) for aid in sorted(world.runtime)}
    for aid, t in tracks.items():
        if t.partial:
            world.log("partial", aid)
    return SimResult(scenario.id, tracks, world.events, dict(world.decisions))
