"""Model parameters and the calibrated per-dataset defaults.

Values come from the calibrated universal columns for the HBS, DUT and
CITR shared spaces. ``synthetic`` scenarios use the HBS set.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from pathlib import Path

from .scenario import AgentKind

PP, PC, CP, CC = "PP", "PC", "CP", "CC"

# pedestrian motion-pattern parameters used for grouping
CLUSTER_PARAMS = ("v_pp", "v_pc", "v_cp", "sigma_pp", "sigma_pc", "lam", "s_d")


def pair_kind(kind_i: AgentKind, kind_j: AgentKind) -> str:
    a = "P" if kind_i is AgentKind.PEDESTRIAN else "C"
    b = "P" if kind_j is AgentKind.PEDESTRIAN else "C"
    return a + b


@dataclass(frozen=True)
class SfmParams:
    tau: float = 0.5
    v_pp: float = 0.1
    v_pc: float = 11.7
    v_cp: float = 0.0
    sigma_pp: float = 0.25
    sigma_pc: float = 0.91
    u_obstacle: float = 10.0
    gamma: float = 0.2
    lam: float = 0.35
    view_range: float = 18.4
    d_min_pc: float = 7.8
    d_min_cc: float = 8.0
    d_min_long: float = 10.0
    s_a: float = 6.0
    s_c: float = 9.0
    s_d: float = 6.0
    w_p: int = 0
    w_c: int = 0
    ped_speed_cap: float = 2.0
    car_speed_cap: float = 1.2

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if not (self.sigma_pp > 0 and self.sigma_pc > 0 and self.gamma > 0):
            raise ValueError("interaction ranges must be positive")
        if min(self.v_pp, self.v_pc, self.v_cp, self.u_obstacle) < 0:
            raise ValueError("interaction strengths must be non-negative")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lambda must lie in [0, 1]")
        for name in ("view_range", "d_min_pc", "d_min_cc", "d_min_long"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.w_p not in (0, 1) or self.w_c not in (0, 1):
            raise ValueError("w_p and w_c are 0/1 weights")

    def strength(self, pair: str) -> float:
        return {PP: self.v_pp, PC: self.v_pc, CP: self.v_cp}.get(pair, 0.0)

    def sigma(self, pair: str) -> float:
        # car-to-pedestrian shares the pedestrian-to-car range
        return self.sigma_pp if pair == PP else self.sigma_pc

    def d_min(self, pair: str) -> float:
        return self.d_min_cc if pair == CC else self.d_min_pc

    def replace(self, **changes) -> "SfmParams":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class GameParams:
    g_c_speed: float = 11.0
    g_p_speed: float = 1.0
    g_competitor_speed: float = 11.0
    g_noai: float = 3.0
    g_stopped: float = 2.0
    g_f_angle: float = 1.0
    g_min_dis: float = 7.0
    g_ace_angle: float = 7.0
    g_dec_angle: float = 5.0
    g_dev_angle: float = 8.0

    def __post_init__(self):
        for f in dataclasses.fields(self):
            if not math.isfinite(getattr(self, f.name)):
                raise ValueError(f"{f.name} must be finite")

    def replace(self, **changes) -> "GameParams":
        return dataclasses.replace(self, **changes)


SFM_DEFAULTS = {
    "HBS": SfmParams(),
    "DUT": SfmParams(
        v_pp=0.1, v_pc=4.5, v_cp=2.27, sigma_pp=0.23, sigma_pc=0.27, lam=0.41, s_d=9.01,
        view_range=10.0, d_min_pc=8.0, w_c=1,
    ),
    "CITR": SfmParams(
        v_pp=0.1, v_pc=1.5, sigma_pp=0.18, sigma_pc=0.69, lam=0.13, s_d=7.0,
        view_range=12.3, d_min_pc=7.0, w_p=1,
    ),
}
SFM_DEFAULTS["synthetic"] = SFM_DEFAULTS["HBS"]

GAME_DEFAULTS = {
    "HBS": GameParams(),
    "DUT": GameParams(4, 0, 0, 0, 0, 6.6, 5, 8, 8, 6),
    "CITR": GameParams(10.4, 1, 6.3, 0.3, 1.1, 0.4, 6.1, 7, 5, 8),
}
GAME_DEFAULTS["synthetic"] = GAME_DEFAULTS["HBS"]

SFM_FIELDS = tuple(f.name for f in dataclasses.fields(SfmParams))
GAME_FIELDS = tuple(f.name for f in dataclasses.fields(GameParams))


def defaults(dataset: str):
    return SFM_DEFAULTS[dataset], GAME_DEFAULTS[dataset]


def apply_values(sfm: SfmParams, game: GameParams, values: dict):
    """Split a flat ``name -> value`` mapping over the two parameter sets."""
    s = {k: v for k, v in values.items() if k in SFM_FIELDS}
    g = {k: v for k, v in values.items() if k in GAME_FIELDS}
    unknown = set(values) - set(s) - set(g)
    if unknown:
        raise KeyError(f"unknown parameter(s): {sorted(unknown)}")
    for k in ("w_p", "w_c"):
        if k in s:
            s[k] = int(round(s[k]))
    return (sfm.replace(**s) if s else sfm), (game.replace(**g) if g else game)


def params_to_dict(sfm: SfmParams, game: GameParams) -> dict:
    return {"sfm": dataclasses.asdict(sfm), "game": dataclasses.asdict(game)}


def load_param_file(path, dataset: str = "synthetic"):
    """Read a parameter file; missing fields fall back to the dataset defaults.

    Returns ``(sfm, game, groups)`` where ``groups`` maps a pedestrian key
    (``"<scenario>:<agent>"`` or a bare agent id) to a flat dict of
    overriding values. Universal parameter sets give an empty mapping.
    """
    with open(Path(path)) as fh:
        data = json.load(fh)
    ds = data.get("dataset", dataset)
    if ds not in SFM_DEFAULTS:
        ds = dataset
    sfm, game = defaults(ds)
    sfm, game = apply_values(sfm, game, {**data.get("sfm", {}), **data.get("game", {})})
    groups = {}
    g = data.get("groups")
    if g:
        table = {str(k): v for k, v in g["group_params"].items()}
        for key, gid in g["assignments"].items():
            groups[str(key)] = table[str(gid)]
    return sfm, game, groups


def agent_params_for(scenario_id: str, agent_ids, sfm: SfmParams, groups: dict) -> dict:
    """Per-agent parameter sets for one scenario from group overrides."""
    out = {}
    for aid in agent_ids:
        over = groups.get(f"{scenario_id}:{aid}", groups.get(str(aid)))
        if over:
            out[aid] = apply_values(sfm, GameParams(), {k: v for k, v in over.items() if k in SFM_FIELDS})[0]
    return out
