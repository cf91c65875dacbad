"""Leader-follower games for pedestrian-car conflicts.

Payoffs start from an ordinal base table (``data/payoffs.json``) and are
shifted by weighted situation features. Followers best-respond to each
leader strategy independently; the leader then picks the strategy whose
induced response profile pays it most.
"""

from __future__ import annotations

import enum
import itertools
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from .forces import Directive, DirectiveKind, Mode
from .geometry import directed_angle, norm, segments_intersect, unit
from .params import GameParams, SfmParams
from .scenario import AgentKind


class GameConfigError(ValueError):
    pass


class StrategyKind(str, enum.Enum):
    CONTINUE = "Continue"
    DECELERATE = "Decelerate"
    DEVIATE = "Deviate"

    @property
    def order(self) -> int:
        return _ORDER[self]


_ORDER = {StrategyKind.CONTINUE: 0, StrategyKind.DECELERATE: 1, StrategyKind.DEVIATE: 2}


def admissible(kind: AgentKind) -> tuple:
    if kind is AgentKind.CAR:
        return (StrategyKind.CONTINUE, StrategyKind.DECELERATE)
    return (StrategyKind.CONTINUE, StrategyKind.DECELERATE, StrategyKind.DEVIATE)


@dataclass(frozen=True)
class FeatureVector:
    noai: int = 0
    car_stopped: int = 0
    min_dist: float = 0.0
    competitor_speed: int = 0
    own_speed: float = 0.0
    angle_class: int = 1

    def __post_init__(self):
        if self.angle_class not in (8, 7, 6, 5, 1):
            raise ValueError(f"invalid angle class {self.angle_class}")
        if self.min_dist < 0:
            raise ValueError("min_dist is a non-negative deficit")

    def value(self, name: str) -> float:
        return float(getattr(self, name))

    def signature(self) -> tuple:
        """Discrete parts whose change triggers a re-solve."""
        return (self.angle_class, int(self.min_dist), self.competitor_speed, self.car_stopped)


def angle_class(theta: float) -> int:
    t = theta % 360.0
    if t < 16.0 or t > 344.0:
        return 8
    if 16.0 <= t <= 42.0 or 318.0 <= t <= 344.0:
        return 7
    if 42.0 < t <= 65.0 or 295.0 <= t < 318.0:
        return 6
    if 65.0 < t <= 90.0 or 270.0 <= t < 295.0:
        return 5
    return 1


def select_leader(participants, first_recognizer: Optional[int] = None) -> int:
    """Cars lead pedestrian-car games; among several cars the first to
    recognise the conflict leads. Otherwise the fastest agent, lower id on ties."""
    if len(participants) < 2:
        raise ValueError("a game needs at least two participants")
    cars = [p for p in participants if p.kind is AgentKind.CAR]
    pool = cars if cars else list(participants)
    if first_recognizer is not None and len(pool) > 1:
        for p in pool:
            if p.id == first_recognizer:
                return p.id
    best = max(pool, key=lambda p: (p.speed, -p.id))
    return best.id


def compute_features(
    i,
    j,
    game_params: GameParams,
    noai: int = 0,
    car_stopped: bool = False,
    s_high_factor: float = 1.2,
    slow_ratio: float = 0.95,
) -> FeatureVector:
    """Situation features of agent ``i`` facing competitor ``j``.

    ``noai`` and ``car_stopped`` come from the scheduler since they depend on
    the rest of the world; both are zero for pedestrians.
    """
    d = norm(i.position - j.position)
    is_car = i.kind is AgentKind.CAR
    if is_car:
        own = i.speed
    else:
        own = 1.0 if i.speed > s_high_factor * i.profile.desired_speed else 0.0
    theta = directed_angle(j.heading, unit(i.position - j.position, fallback=j.heading))
    return FeatureVector(
        noai=int(noai) if is_car else 0,
        car_stopped=int(bool(car_stopped)) if is_car else 0,
        min_dist=max(0.0, game_params.g_min_dis - d),
        competitor_speed=int(j.speed < slow_ratio * j.profile.desired_speed),
        own_speed=own,
        angle_class=angle_class(theta),
    )


# --------------------------------------------------------------------------
# payoff tables


@dataclass(frozen=True)
class PayoffTable:
    """Ordinal base payoffs plus the feature applicability map."""

    base: dict
    features: tuple

    @classmethod
    def from_dict(cls, data: dict) -> "PayoffTable":
        if "base" not in data:
            raise GameConfigError("payoff config lacks a 'base' section")
        feats = []
        for f in data.get("features", []):
            w = f.get("weight")
            if w is not None and w not in GameParams.__dataclass_fields__:
                raise GameConfigError(f"unknown weight {w!r}")
            if f["feature"] not in FeatureVector.__dataclass_fields__:
                raise GameConfigError(f"unknown feature {f['feature']!r}")
            feats.append((f["feature"], AgentKind(f["kind"]), StrategyKind(f["strategy"]), w))
        return cls(data["base"], tuple(feats))

    @classmethod
    def load(cls, path=None) -> "PayoffTable":
        if path is None:
            text = resources.files("sharedspace").joinpath("data/payoffs.json").read_text()
            return cls.from_dict(json.loads(text))
        with open(Path(path)) as fh:
            return cls.from_dict(json.load(fh))

    def base_value(self, leader_kind, follower_kind, role, s_l, s_f) -> float:
        key = f"{leader_kind.value}>{follower_kind.value}"
        try:
            return float(self.base[key][role][s_l.value][s_f.value])
        except KeyError:
            raise GameConfigError(
                f"missing base payoff {key}/{role}/{s_l.value}/{s_f.value}"
            ) from None

    def adjustment(self, kind: AgentKind, strategy: StrategyKind, features: FeatureVector, game_params: GameParams) -> float:
        total = 0.0
        for feat, k, s, w in self.features:
            if k is kind and s is strategy:
                weight = 1.0 if w is None else getattr(game_params, w)
                total += weight * features.value(feat)
        return total


@dataclass
class PayoffMatrix:
    """Leader payoffs over full profiles, follower payoffs per (s_l, s_k).

    ``leader_payoffs`` has shape ``(n_l, n_1, ..., n_m)``;
    ``follower_payoffs[k]`` has shape ``(n_l, n_k)``.
    """

    leader: int
    followers: tuple
    leader_strategies: tuple
    follower_strategies: tuple
    leader_payoffs: np.ndarray
    follower_payoffs: tuple

    def __post_init__(self):
        shape = (len(self.leader_strategies), *(len(s) for s in self.follower_strategies))
        if self.leader_payoffs.shape != shape:
            raise GameConfigError(f"leader payoffs shape {self.leader_payoffs.shape} != {shape}")
        for k, fp in enumerate(self.follower_payoffs):
            if fp.shape != (len(self.leader_strategies), len(self.follower_strategies[k])):
                raise GameConfigError(f"follower {k} payoff shape mismatch")
        if not np.all(np.isfinite(self.leader_payoffs)) or not all(np.all(np.isfinite(f)) for f in self.follower_payoffs):
            raise GameConfigError("non-finite payoff")

    def payoff(self, s_l: int, s_f: tuple):
        u_l = float(self.leader_payoffs[(s_l, *s_f)])
        u_f = tuple(float(fp[s_l, s]) for fp, s in zip(self.follower_payoffs, s_f))
        return u_l, u_f


def build_payoff_matrix(leader, followers, features: dict, game_params: GameParams, table: PayoffTable) -> PayoffMatrix:
    """Assemble the game matrix.

    ``features[(a, b)]`` is the :class:`FeatureVector` of agent ``a`` facing
    ``b``; it is needed for (leader, follower) and (follower, leader) pairs.
    The leader's payoff is the sum of its pairwise payoffs against each
    follower.
    """
    S_l = admissible(leader.kind)
    S_f = tuple(admissible(f.kind) for f in followers)
    pair_l = []
    f_pay = []
    for f, strategies in zip(followers, S_f):
        fl = features[(leader.id, f.id)]
        ff = features[(f.id, leader.id)]
        ul = np.empty((len(S_l), len(strategies)))
        uf = np.empty((len(S_l), len(strategies)))
        for a, s_l in enumerate(S_l):
            adj_l = table.adjustment(leader.kind, s_l, fl, game_params)
            for b, s_f in enumerate(strategies):
                ul[a, b] = table.base_value(leader.kind, f.kind, "leader", s_l, s_f) + adj_l
                uf[a, b] = table.base_value(leader.kind, f.kind, "follower", s_l, s_f) + table.adjustment(
                    f.kind, s_f, ff, game_params
                )
        pair_l.append(ul)
        f_pay.append(uf)
    total = np.zeros((len(S_l), *(len(s) for s in S_f)))
    for k, ul in enumerate(pair_l):
        shape = [len(S_l)] + [1] * len(S_f)
        shape[k + 1] = ul.shape[1]
        total = total + ul.reshape(shape)
    return PayoffMatrix(leader.id, tuple(f.id for f in followers), S_l, S_f, total, tuple(f_pay))


def _first_argmax(values) -> int:
    values = list(values)
    best = max(values)
    return values.index(best)


def solve_stackelberg(matrix: PayoffMatrix):
    """Subgame-perfect profile as ``(leader index, follower index tuple)``.

    Strategies are assumed listed in tie-break order, so the first maximiser
    wins every tie.
    """
    best = None
    for s_l in range(len(matrix.leader_strategies)):
        response = tuple(_first_argmax(fp[s_l]) for fp in matrix.follower_payoffs)
        u = float(matrix.leader_payoffs[(s_l, *response)])
        if best is None or u > best[0]:
            best = (u, s_l, response)
    return best[1], best[2]


def solve_by_enumeration(matrix: PayoffMatrix):
    """Reference solver enumerating every pure profile."""
    n_l = len(matrix.leader_strategies)
    candidates = []
    for prof in itertools.product(range(n_l), *(range(len(s)) for s in matrix.follower_strategies)):
        s_l, s_f = prof[0], prof[1:]
        ok = True
        for k, s in enumerate(s_f):
            row = matrix.follower_payoffs[k][s_l]
            if row[s] != row.max() or any(row[t] == row.max() for t in range(s)):
                ok = False
                break
        if ok:
            candidates.append((s_l, s_f))
    best = None
    for s_l, s_f in candidates:
        u = matrix.leader_payoffs[(s_l, *s_f)]
        if best is None or u > best[0]:
            best = (u, s_l, s_f)
    return best[1], best[2]


def solve_strategies(matrix: PayoffMatrix) -> dict:
    """Solved profile as ``agent id -> StrategyKind``."""
    s_l, s_f = solve_stackelberg(matrix)
    out = {matrix.leader: matrix.leader_strategies[s_l]}
    for fid, strategies, s in zip(matrix.followers, matrix.follower_strategies, s_f):
        out[fid] = strategies[s]
    return out


# --------------------------------------------------------------------------
# executing a strategy


def car_deceleration_rate(speed: float, distance: float, d_min: float) -> float:
    """Speed reduction for a yielding car, capped at half the current speed."""
    if distance <= d_min:
        return speed / 2.0
    return min(speed * speed / (distance - d_min), speed / 2.0)


def strategy_directive(agent, strategy: StrategyKind, opponent, params: SfmParams) -> Directive:
    strategy = StrategyKind(strategy)
    d = norm(agent.position - opponent.position)
    tag = strategy.value
    if agent.kind is AgentKind.CAR:
        if strategy is StrategyKind.DEVIATE:
            raise ValueError("cars cannot deviate")
        if strategy is StrategyKind.CONTINUE:
            return Directive(DirectiveKind.FREE, Mode.GAME, strategy=tag)
        new_speed = agent.speed - car_deceleration_rate(agent.speed, d, params.d_min_pc)
        return Directive(DirectiveKind.DECELERATE, Mode.GAME, speed=new_speed, strategy=tag)

    if strategy is StrategyKind.CONTINUE:
        e = opponent.heading
        front = opponent.position + params.s_a * e
        back = opponent.position - (params.s_a / 2.0) * e
        if segments_intersect(agent.position, agent.profile.destination, front, back):
            return Directive(DirectiveKind.STEER, Mode.GAME, point=(float(front[0]), float(front[1])), strategy=tag)
        return Directive(DirectiveKind.FREE, Mode.GAME, strategy=tag)
    if strategy is StrategyKind.DECELERATE:
        if d <= agent.radius + opponent.radius + 1.0:
            return Directive(DirectiveKind.STOP, Mode.GAME, speed=0.0, strategy=tag)
        return Directive(DirectiveKind.DECELERATE, Mode.GAME, speed=agent.speed / 2.0, strategy=tag)
    if d <= params.view_range:
        p = opponent.position - params.s_d * opponent.heading
        return Directive(DirectiveKind.STEER, Mode.GAME, point=(float(p[0]), float(p[1])), strategy=tag)
    return Directive(DirectiveKind.FREE, Mode.GAME, strategy=tag)
