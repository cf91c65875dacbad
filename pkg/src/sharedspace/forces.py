"""Social-force terms, car rules and Euler integration.

Every function here is pure: it reads agent states and parameters and
returns a vector or a directive. The scheduler in :mod:`sharedspace.simulation`
decides which of them applies to an agent at a given step.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .geometry import (
    EPS,
    directed_angle,
    nearest_point_on_polyline,
    norm,
    rotate,
    unit,
)
from .params import SfmParams, pair_kind
from .scenario import AgentKind, Geometry, InputProfile


class NonFiniteStateError(RuntimeError):
    pass


class Mode(str, enum.Enum):
    FREE_FLOW = "free_flow"
    FOLLOW = "follow"
    STOP = "stop"
    GAME = "game"
    LONG = "long"


class DirectiveKind(str, enum.Enum):
    FREE = "free"  # regular force sum
    STEER = "steer"  # drive toward ``point`` at the desired speed
    DECELERATE = "decelerate"  # relax toward ``speed`` along the heading
    STOP = "stop"  # relax toward zero velocity


@dataclass(frozen=True)
class Directive:
    kind: DirectiveKind
    source: Mode = Mode.FREE_FLOW
    point: Optional[tuple] = None
    speed: Optional[float] = None
    strategy: Optional[str] = None


FREE = Directive(DirectiveKind.FREE)


@dataclass(frozen=True, eq=False)
class AgentState:
    id: int
    kind: AgentKind
    position: np.ndarray
    velocity: np.ndarray
    heading: np.ndarray
    radius: float
    profile: InputProfile
    mode: Mode = Mode.FREE_FLOW
    strategy: Optional[str] = None
    # steering target for the driving force (next waypoint)
    target: Optional[np.ndarray] = None
    # last valid unit vector from each neighbour toward this agent
    last_normals: dict = field(default_factory=dict)

    @property
    def speed(self) -> float:
        return norm(self.velocity)

    @property
    def is_car(self) -> bool:
        return self.kind is AgentKind.CAR

    def steering_point(self) -> np.ndarray:
        return self.profile.destination if self.target is None else self.target


def make_state(agent_id, kind, position, velocity, radius, profile, **kw) -> AgentState:
    position = np.asarray(position, dtype=float)
    velocity = np.asarray(velocity, dtype=float)
    if "heading" in kw:
        heading = np.asarray(kw.pop("heading"), dtype=float)
    else:
        heading = unit(velocity, fallback=unit(profile.destination - position, fallback=(1.0, 0.0)))
    return AgentState(agent_id, kind, position, velocity, heading, radius, profile, **kw)


# --------------------------------------------------------------------------
# force terms


def driving_force(state: AgentState, params: SfmParams, point=None, speed=None) -> np.ndarray:
    """Relaxation toward the desired velocity pointing at the steering point."""
    target = state.steering_point() if point is None else np.asarray(point, dtype=float)
    v_d = state.profile.desired_speed if speed is None else speed
    desired = v_d * unit(target - state.position)
    return (desired - state.velocity) / params.tau


def anisotropy(phi: float, lam: float) -> float:
    return lam + (1.0 - lam) * (1.0 + math.cos(math.radians(phi))) / 2.0


def agent_repulsion(i: AgentState, j: AgentState, params: SfmParams, strength=None, sigma=None) -> np.ndarray:
    """Exponential repulsion of ``j`` on ``i``.

    ``strength``/``sigma`` override the pair-kind lookup (used when the
    values come from the other agent's parameter group).
    """
    if i.id == j.id:
        raise ValueError("an agent does not repel itself")
    pk = pair_kind(i.kind, j.kind)
    V = params.strength(pk) if strength is None else strength
    s = params.sigma(pk) if sigma is None else sigma
    rel = i.position - j.position
    d = norm(rel)
    if d > params.view_range:
        return np.zeros(2)
    if d < EPS:
        n_hat = i.last_normals.get(j.id)
        if n_hat is None:
            n_hat = -i.heading if norm(i.heading) > EPS else np.array([1.0, 0.0])
        n_hat = np.asarray(n_hat, dtype=float)
    else:
        n_hat = rel / d
    phi = directed_angle(i.heading, -n_hat) if norm(i.heading) > EPS else 0.0
    F = anisotropy(phi, params.lam)
    return V * math.exp((i.radius + j.radius - d) / s) * F * n_hat


def obstacle_repulsion(i: AgentState, obstacle, params: SfmParams) -> np.ndarray:
    verts = np.asarray(obstacle.vertices, dtype=float)
    nearest, seg = nearest_point_on_polyline(i.position, verts, obstacle.closed)
    rel = i.position - nearest
    d = norm(rel)
    if d < EPS:
        a = verts[seg]
        b = verts[(seg + 1) % len(verts)]
        t = unit(b - a)
        n_hat = np.array([-t[1], t[0]])
        # the normal of a closed counter-clockwise ring points inward; flip it
        if obstacle.closed and _ring_area(verts) > 0:
            n_hat = -n_hat
    else:
        n_hat = rel / d
    return params.u_obstacle * math.exp((i.radius - d) / params.gamma) * n_hat


def _ring_area(v) -> float:
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


# --------------------------------------------------------------------------
# car rules


def car_following(i: AgentState, leader: AgentState, params: SfmParams) -> Directive:
    d = norm(leader.position - i.position)
    if leader.speed < EPS or d < params.d_min_cc:
        return Directive(DirectiveKind.DECELERATE, Mode.FOLLOW, speed=i.speed / 2.0)
    p = i.position + unit(leader.velocity) * params.d_min_cc
    return Directive(DirectiveKind.STEER, Mode.FOLLOW, point=(float(p[0]), float(p[1])))


def in_front_corridor(car: AgentState, point, reach: float, half_width: float, car_length: float) -> bool:
    """Whether ``point`` lies in the strip ahead of the car's centre.

    The strip runs from the car centre to ``reach`` meters past its front
    bumper and is ``2 * half_width`` wide.
    """
    e = car.heading if norm(car.heading) > EPS else np.array([1.0, 0.0])
    rel = np.asarray(point, dtype=float) - car.position
    s = rel[0] * e[0] + rel[1] * e[1]
    lat = -rel[0] * e[1] + rel[1] * e[0]
    return 0.0 < s <= car_length / 2.0 + reach and abs(lat) <= half_width


def reactive_stop(car: AgentState, peds, params: SfmParams, geometry: Geometry = Geometry()) -> Optional[Directive]:
    for p in peds:
        if p.kind is not AgentKind.PEDESTRIAN:
            continue
        if in_front_corridor(car, p.position, params.d_min_pc, geometry.car_width / 2.0 + p.radius, geometry.car_length):
            return Directive(DirectiveKind.STOP, Mode.STOP, speed=0.0)
    return None


def longitudinal_conditions(i: AgentState, j: AgentState):
    """Return ``(theta, g, c1, c2, c3)`` for pedestrian ``i`` and car ``j``.

    ``theta`` is the angle from the car heading to the direction from the
    car toward the pedestrian.
    """
    n = unit(i.position - j.position)
    theta = directed_angle(j.heading, n)
    g = float(i.heading @ j.heading)
    c1 = theta < 2.0 or theta > 358.0
    c2 = g >= 0.99 or g <= -0.99
    c3 = theta >= 348.0 or theta <= 12.0
    return theta, g, c1, c2, c3


def longitudinal_avoidance(i: AgentState, j: AgentState, params: SfmParams) -> Optional[np.ndarray]:
    """Temporary goal for front/back encounters between a pedestrian and a car."""
    if norm(i.position - j.position) >= params.d_min_long:
        return None
    theta, g, c1, c2, c3 = longitudinal_conditions(i, j)
    if not (c1 or (c2 and c3)):
        return None
    b = 1.0 if g <= -0.99 else 1.5
    if theta >= 348.0:
        rot, c = 90.0, 3.0 * b
    else:
        rot, c = 180.0, 2.2 * b
    f = j.heading * c
    return i.position + rotate(f, rot)


# --------------------------------------------------------------------------
# composition and integration


def directive_acceleration(state: AgentState, directive: Directive, params: SfmParams) -> np.ndarray:
    if directive.kind is DirectiveKind.STEER:
        return driving_force(state, params, point=directive.point)
    if directive.kind is DirectiveKind.DECELERATE:
        heading = state.heading if norm(state.heading) > EPS else unit(state.velocity)
        return (directive.speed * heading - state.velocity) / params.tau
    if directive.kind is DirectiveKind.STOP:
        return -state.velocity / params.tau
    raise ValueError(f"{directive.kind} has no standalone acceleration")


def compose_acceleration(
    state: AgentState,
    neighbors,
    obstacles,
    params: SfmParams,
    directive: Directive = FREE,
    long_goal=None,
    neighbor_params=None,
) -> np.ndarray:
    """Total acceleration of one agent.

    A non-free ``directive`` (game action, following, stop) replaces the force
    sum entirely. Otherwise pedestrians add obstacle and agent repulsion and,
    when ``w_p`` is set, steer toward ``long_goal``; cars only feel
    pedestrians, weighted by ``w_c``.

    ``neighbor_params`` maps neighbour id to its own parameter set; the
    car-to-pedestrian strength is read from the pedestrian's set.
    """
    if directive.kind is not DirectiveKind.FREE:
        if state.kind is AgentKind.PEDESTRIAN and directive.source is Mode.FOLLOW:
            raise ValueError("pedestrians do not car-follow")
        return directive_acceleration(state, directive, params)

    if state.kind is AgentKind.PEDESTRIAN:
        if long_goal is not None and params.w_p:
            acc = driving_force(state, params, point=long_goal)
        else:
            acc = driving_force(state, params)
        for ob in obstacles:
            acc = acc + obstacle_repulsion(state, ob, params)
        for j in neighbors:
            if j.id != state.id:
                acc = acc + agent_repulsion(state, j, params)
        return acc

    acc = driving_force(state, params)
    if params.w_c:
        for j in neighbors:
            if j.id == state.id or j.kind is AgentKind.CAR:
                continue
            jp = (neighbor_params or {}).get(j.id, params)
            acc = acc + params.w_c * agent_repulsion(state, j, params, strength=jp.v_cp, sigma=jp.sigma_pc)
    return acc


def speed_cap(state: AgentState, params: SfmParams) -> float:
    factor = params.ped_speed_cap if state.kind is AgentKind.PEDESTRIAN else params.car_speed_cap
    return factor * state.profile.desired_speed


def integrate(state: AgentState, acceleration, dt: float, params: SfmParams) -> AgentState:
    """One explicit Euler step with the speed cap applied to the new velocity."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    a = np.asarray(acceleration, dtype=float)
    if not np.all(np.isfinite(a)):
        raise NonFiniteStateError(f"agent {state.id}: non-finite acceleration {a}")
    v = state.velocity + a * dt
    cap = speed_cap(state, params)
    s = norm(v)
    if s > cap:
        v = v * (cap / s)
    x = state.position + v * dt
    heading = unit(v, fallback=state.heading)
    return replace(state, position=x, velocity=v, heading=heading)
