"""Genetic-algorithm calibration and the staged grouping workflow.

Stages::

    S1  universal parameters for everybody (social-force part, then game part)
    S2  individual parameters per pedestrian, neighbours replayed from data
    S3  PCA + k-means grouping of the S2 matrix
    S4  forward selection of columns on the S2 matrix
    S6  k-means grouping on the selected columns
    S5  group calibration of the S3 groups (all grouping parameters)
    S7  group calibration of the S6 groups, selected parameters only
    S8  group calibration of the S6 groups, all grouping parameters

Variants: GSFM_U <- S1, GSFM_M1 <- S5, GSFM_M2 <- S8, GSFM_M3 <- S7.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import clustering
from .params import CLUSTER_PARAMS, GAME_FIELDS, SFM_FIELDS, GameParams, SfmParams, apply_values, defaults
from .rng import derive_seed
from .scenario import AgentKind, Scenario
from .simulation import SimConfig, run

log = logging.getLogger(__name__)

STAGES = ("S1", "S2", "S3", "S4", "S5", "S6", "S7", "S8")
DEPENDS = {
    "S1": (),
    "S2": ("S1",),
    "S3": ("S2",),
    "S4": ("S2",),
    "S5": ("S1", "S3"),
    "S6": ("S4",),
    "S7": ("S1", "S4", "S6"),
    "S8": ("S1", "S6"),
}
VARIANT_STAGE = {"GSFM_U": "S1", "GSFM_M1": "S5", "GSFM_M2": "S8", "GSFM_M3": "S7"}

# search ranges; the defaults of every dataset lie inside
DEFAULT_BOUNDS = {
    "tau": (0.2, 2.0),
    "v_pp": (0.0, 5.0),
    "v_pc": (0.0, 20.0),
    "v_cp": (0.0, 10.0),
    "sigma_pp": (0.05, 2.0),
    "sigma_pc": (0.05, 3.0),
    "u_obstacle": (0.0, 20.0),
    "gamma": (0.05, 1.0),
    "lam": (0.0, 1.0),
    "view_range": (5.0, 25.0),
    "d_min_pc": (3.0, 12.0),
    "d_min_cc": (3.0, 12.0),
    "d_min_long": (3.0, 15.0),
    "s_a": (1.0, 12.0),
    "s_c": (2.0, 15.0),
    "s_d": (1.0, 12.0),
    **{name: (0.0, 12.0) for name in GAME_FIELDS},
}


class CalibrationError(ValueError):
    pass


class StageDependencyError(CalibrationError):
    pass


@dataclass(frozen=True)
class ParameterVector:
    names: tuple
    values: tuple
    bounds: tuple

    def __post_init__(self):
        if not len(self.names) == len(self.values) == len(self.bounds):
            raise CalibrationError("names, values and bounds differ in length")
        for n, v, (lo, hi) in zip(self.names, self.values, self.bounds):
            if not lo <= v <= hi:
                raise CalibrationError(f"{n}={v} outside [{lo}, {hi}]")

    @classmethod
    def from_dict(cls, values: dict, bounds: Optional[dict] = None) -> "ParameterVector":
        bounds = bounds or DEFAULT_BOUNDS
        names = tuple(values)
        return cls(names, tuple(float(values[n]) for n in names), tuple(tuple(bounds[n]) for n in names))

    def as_dict(self) -> dict:
        return dict(zip(self.names, self.values))

    @property
    def cluster_mask(self) -> tuple:
        return tuple(n in self.names for n in CLUSTER_PARAMS)

    def apply(self, sfm: SfmParams, game: GameParams):
        return apply_values(sfm, game, self.as_dict())


@dataclass(frozen=True)
class GaConfig:
    population: int = 50
    generations: int = 150
    crossover_rate: float = 0.9
    mutation_rate: float = 0.2
    mutation_scale: float = 0.1
    elite: int = 2
    tournament: int = 3
    stagnation: int = 30
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.population < 2:
            raise ValueError("population must be at least 2")
        for name in ("crossover_rate", "mutation_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if not 0 <= self.elite < self.population:
            raise ValueError("elite count must be below the population size")
        if self.generations < 1 or self.tournament < 1:
            raise ValueError("generations and tournament size must be positive")


@dataclass
class GaResult:
    best: ParameterVector
    fitness: float
    trace: list
    generations: int
    evaluations: int

    def to_dict(self) -> dict:
        return {"values": self.best.as_dict(), "fitness": self.fitness, "trace": self.trace,
                "generations": self.generations, "evaluations": self.evaluations}


def _evaluate(objective, xs, workers, cache):
    todo = [x for x in dict.fromkeys(tuple(x) for x in xs) if x not in cache]
    if workers > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            vals = list(ex.map(objective, [np.array(x) for x in todo]))
    else:
        vals = [objective(np.array(x)) for x in todo]
    for x, v in zip(todo, vals):
        v = float(v)
        if not math.isfinite(v):
            log.warning("objective returned %r at %s; treated as worst", v, x)
            v = math.inf
        cache[x] = v
    return np.array([cache[tuple(x)] for x in xs])


def ga_optimize(objective: Callable, bounds, config: GaConfig = GaConfig(), initial=None) -> GaResult:
    """Minimize ``objective`` over a box with a real-coded GA.

    ``bounds`` is a ``name -> (lo, hi)`` mapping or a sequence of pairs.
    ``initial`` rows seed the first population; the rest is uniform.
    Each trace entry is the best fitness found up to that generation.
    """
    if isinstance(bounds, dict):
        names = tuple(bounds)
        box = np.array([bounds[n] for n in names], dtype=float)
    else:
        box = np.array(bounds, dtype=float)
        names = tuple(f"x{i}" for i in range(len(box)))
    lo, hi = box[:, 0], box[:, 1]
    if np.any(hi < lo):
        raise CalibrationError("inverted bounds")
    span = hi - lo
    rng = np.random.default_rng(config.seed)
    n, d = config.population, len(box)

    pop = lo + rng.random((n, d)) * span
    if initial is not None:
        init = np.clip(np.atleast_2d(np.asarray(initial, dtype=float)), lo, hi)[:n]
        pop[: len(init)] = init

    cache: dict = {}
    trace: list = []
    best_x, best_f = None, math.inf
    stale = 0
    gen = 0
    for gen in range(1, config.generations + 1):
        fit = _evaluate(objective, pop, config.workers, cache)
        order = np.argsort(fit, kind="stable")
        if fit[order[0]] < best_f - 1e-15:
            best_f, best_x = float(fit[order[0]]), pop[order[0]].copy()
            stale = 0
        else:
            stale += 1
        if best_x is None:
            best_x = pop[order[0]].copy()
        trace.append(best_f)
        if stale >= config.stagnation or gen == config.generations:
            break
        nxt = [pop[i].copy() for i in order[: config.elite]]
        while len(nxt) < n:
            a = _tournament(fit, config.tournament, rng)
            b = _tournament(fit, config.tournament, rng)
            child = pop[a].copy()
            if rng.random() < config.crossover_rate:
                mask = rng.random(d) < 0.5
                child[mask] = pop[b][mask]
            if config.mutation_rate > 0:
                hit = rng.random(d) < config.mutation_rate
                child = child + hit * rng.normal(0.0, 1.0, d) * config.mutation_scale * span
            nxt.append(np.clip(child, lo, hi))
        pop = np.array(nxt)
    best = ParameterVector(names, tuple(float(v) for v in best_x), tuple(map(tuple, box)))
    return GaResult(best, best_f, trace, gen, len(cache))


def _tournament(fit, size, rng) -> int:
    idx = rng.integers(len(fit), size=size)
    return int(idx[np.argmin(fit[idx])])


# --------------------------------------------------------------------------
# fitness functions


def nested_mean(per_scenario) -> float:
    """Mean over scenarios of the mean over their agents' scores."""
    means = [float(np.mean(s)) for s in per_scenario if len(s)]
    if not means:
        raise CalibrationError("no overlapping timesteps")
    return float(np.mean(means))


def agent_errors(scenario: Scenario, tracks: dict, agents=None) -> dict:
    """Mean displacement error per simulated agent over the shared timestamps."""
    out = {}
    for aid in sorted(tracks):
        t = tracks[aid]
        if getattr(t, "ghost", False) or (agents is not None and aid not in agents):
            continue
        if len(t.times) == 0:
            continue
        real = scenario.track(aid)
        err = [np.linalg.norm(real.position_at(tt) - p) for tt, p in zip(t.times, t.positions)]
        out[aid] = float(np.mean(err))
    return out


def fitness_position(scenarios, sfm: SfmParams, game: GameParams, config: SimConfig = SimConfig(),
                     agent_params=None, agents=None, table=None) -> float:
    """Triple-nested mean displacement error (steps, agents, scenarios).

    ``agent_params`` and ``agents`` are keyed by scenario id; the latter
    restricts which agents are scored.
    """
    per = []
    for sc in scenarios:
        ap = (agent_params or {}).get(sc.id)
        res = run(sc, sfm, game, config=config, agent_params=ap, table=table)
        errs = agent_errors(sc, res.tracks, None if agents is None else agents.get(sc.id, ()))
        if errs:
            per.append(list(errs.values()))
    return nested_mean(per)


def fitness_individual(scenario: Scenario, target: int, sfm: SfmParams, game: GameParams,
                       config: SimConfig = SimConfig(), agent_params=None, table=None, world_hook=None) -> float:
    """Error of one pedestrian simulated among neighbours replayed from data."""
    ghosts = frozenset(t.id for t in scenario.tracks if t.id != target)
    cfg = dataclasses.replace(config, ghosts=ghosts)
    res = run(scenario, sfm, game, config=cfg, agent_params=agent_params, table=table, world_hook=world_hook)
    errs = agent_errors(scenario, res.tracks, {target})
    if target not in errs:
        raise CalibrationError("no overlapping timesteps")
    return errs[target]


def decision_score(annotations: dict, simulated: dict) -> Optional[float]:
    """+1 per matching decision, -1 per mismatch, averaged; ``None`` if nothing is annotated.

    Agents that never entered a game count as having continued.
    """
    vals = []
    for aid in sorted(annotations):
        want = annotations[aid]
        if want is None:
            log.warning("agent %s has no annotated decision; excluded", aid)
            continue
        got = simulated.get(aid, "Continue")
        vals.append(1.0 if str(got) == str(want) else -1.0)
    return float(np.mean(vals)) if vals else None


def fitness_decision(scenarios, sfm: SfmParams, game: GameParams, config: SimConfig = SimConfig(),
                     agent_params=None, table=None) -> float:
    per = []
    for sc in scenarios:
        if not sc.decisions:
            continue
        res = run(sc, sfm, game, config=config, agent_params=(agent_params or {}).get(sc.id), table=table)
        s = decision_score(sc.decisions, res.decisions)
        if s is not None:
            per.append([s])
    if not per:
        raise CalibrationError("no annotated decisions")
    return nested_mean(per)


@dataclass
class Objective:
    """Picklable objective over a named subset of parameters.

    ``kind`` is ``position``, ``decision`` (negated, so lower is better) or
    ``individual``. ``group`` restricts candidate values to the listed
    ``(scenario_id, agent_id)`` pairs; everybody else keeps ``agent_params``.
    """

    kind: str
    names: tuple
    scenarios: list
    sfm: SfmParams
    game: GameParams
    config: SimConfig = SimConfig()
    agent_params: dict = field(default_factory=dict)
    target: Optional[tuple] = None
    group: Optional[frozenset] = None

    def __call__(self, x) -> float:
        values = dict(zip(self.names, (float(v) for v in x)))
        try:
            if self.group is not None:
                return self._group(values)
            sfm, game = apply_values(self.sfm, self.game, values)
            if self.kind == "individual":
                sid, aid = self.target
                sc = next(s for s in self.scenarios if s.id == sid)
                return fitness_individual(sc, aid, sfm, game, self.config, self.agent_params.get(sid))
            if self.kind == "decision":
                return -fitness_decision(self.scenarios, sfm, game, self.config, self.agent_params)
            return fitness_position(self.scenarios, sfm, game, self.config, self.agent_params)
        except ValueError as exc:
            log.warning("objective failed at %s: %s", values, exc)
            return math.inf

    def _group(self, values) -> float:
        sfm_vals = {k: v for k, v in values.items() if k in SFM_FIELDS}
        cand = apply_values(self.sfm, self.game, sfm_vals)[0]
        ap = {sid: dict(m) for sid, m in self.agent_params.items()}
        scored = {}
        for sid, aid in self.group:
            ap.setdefault(sid, {})[aid] = cand
            scored.setdefault(sid, set()).add(aid)
        scs = [s for s in self.scenarios if s.id in scored]
        return fitness_position(scs, self.sfm, self.game, self.config, ap, scored)


# --------------------------------------------------------------------------
# workflow


@dataclass(frozen=True)
class CalibrationPlan:
    stages: tuple = STAGES
    ga: GaConfig = GaConfig()
    ga_individual: GaConfig = GaConfig()
    universal_sfm: tuple = CLUSTER_PARAMS
    universal_game: tuple = GAME_FIELDS
    cluster_params: tuple = CLUSTER_PARAMS
    bounds: dict = field(default_factory=lambda: dict(DEFAULT_BOUNDS))
    k: Optional[int] = None
    c_s: float = 0.5
    variance_threshold: float = 0.9
    game_fitness: str = "auto"  # auto | position | decision
    sim: SimConfig = SimConfig()
    seed: int = 0

    def __post_init__(self):
        bad = [s for s in self.stages if s not in STAGES]
        if bad:
            raise CalibrationError(f"unknown stage(s) {bad}")
        unknown = set(self.universal_sfm) | set(self.universal_game) | set(self.cluster_params)
        unknown -= set(self.bounds)
        if unknown:
            raise CalibrationError(f"no bounds for {sorted(unknown)}")


def check_dependencies(stages, artifacts: dict) -> None:
    done = set(artifacts)
    for s in sorted(stages, key=STAGES.index):
        missing = [d for d in DEPENDS[s] if d not in done]
        if missing:
            raise StageDependencyError(f"stage {s} needs {', '.join(missing)} first")
        done.add(s)


def pedestrian_rows(scenarios) -> list:
    return [(sc.id, t.id) for sc in scenarios for t in sc.tracks if t.kind is AgentKind.PEDESTRIAN]


def _row_key(sid, aid) -> str:
    return f"{sid}:{aid}"


def _ga(plan: CalibrationPlan, cfg: GaConfig, name: str) -> GaConfig:
    return dataclasses.replace(cfg, seed=derive_seed(plan.seed, name))


def _universal(scenarios, plan, sfm, game) -> dict:
    out = {"values": {}, "steps": []}
    # social-force and safety values first, then the payoff weights
    steps = [("sfm", plan.universal_sfm, "position")]
    gf = plan.game_fitness
    if gf == "auto":
        gf = "decision" if any(sc.decisions for sc in scenarios) else "position"
    steps.append(("game", plan.universal_game, gf))
    for tag, names, kind in steps:
        if not names:
            continue
        bounds = {n: plan.bounds[n] for n in names}
        start = {**dataclasses.asdict(sfm), **dataclasses.asdict(game)}
        init = [[min(max(start[n], bounds[n][0]), bounds[n][1]) for n in names]]
        obj = Objective(kind, tuple(names), list(scenarios), sfm, game, plan.sim)
        res = ga_optimize(obj, bounds, _ga(plan, plan.ga, f"S1:{tag}"), initial=init)
        sfm, game = res.best.apply(sfm, game)
        out["values"].update(res.best.as_dict())
        out["steps"].append({"part": tag, "fitness_kind": kind, **res.to_dict()})
    out["fitness"] = fitness_position(scenarios, sfm, game, plan.sim)
    return out


def _individual(scenarios, plan, sfm, game) -> dict:
    names = tuple(plan.cluster_params)
    bounds = {n: plan.bounds[n] for n in names}
    start = dataclasses.asdict(sfm)
    init = [[min(max(start[n], bounds[n][0]), bounds[n][1]) for n in names]]
    rows, values, fits = [], [], []
    for sid, aid in pedestrian_rows(scenarios):
        obj = Objective("individual", names, list(scenarios), sfm, game, plan.sim, target=(sid, aid))
        res = ga_optimize(obj, bounds, _ga(plan, plan.ga_individual, f"S2:{sid}:{aid}"), initial=init)
        rows.append(_row_key(sid, aid))
        values.append([res.best.as_dict()[n] for n in names])
        fits.append(res.fitness)
    return {"rows": rows, "columns": list(names), "values": values, "fitness": fits}


def _matrix_of(art: dict) -> np.ndarray:
    m = np.asarray(art["values"], dtype=float)
    if m.ndim != 2 or len(m) < 2:
        raise CalibrationError("insufficient rows")
    return m


def _degenerate(m: np.ndarray) -> bool:
    """Every pedestrian ended with the same values: nothing to cluster."""
    return bool(np.all(m.std(axis=0) == 0))


def _single_group(m: np.ndarray, method: str):
    log.warning("individual parameters have no spread; one group")
    res = clustering.kmeans(m, 1)
    res.method, res.flagged = method, True
    return res


def _group_stage(scenarios, plan, sfm, game, assignments: dict, names, stage: str) -> dict:
    groups: dict = {}
    for key, gid in assignments.items():
        sid, aid = key.rsplit(":", 1)
        groups.setdefault(int(gid), set()).add((sid, int(aid)))
    universal = {n: getattr(sfm, n) for n in names}
    if len(groups) < 2:
        log.warning("%s: a single group; falling back to the universal values", stage)
        return {"group_params": {"0": universal}, "assignments": assignments, "fitness": {}, "collapsed": True,
                "names": list(names)}
    bounds = {n: plan.bounds[n] for n in names}
    init = [[min(max(universal[n], bounds[n][0]), bounds[n][1]) for n in names]]
    params, fits = {}, {}
    for gid in sorted(groups):
        obj = Objective("position", tuple(names), list(scenarios), sfm, game, plan.sim, group=frozenset(groups[gid]))
        res = ga_optimize(obj, bounds, _ga(plan, plan.ga, f"{stage}:{gid}"), initial=init)
        params[str(gid)] = res.best.as_dict()
        fits[str(gid)] = res.fitness
    return {"group_params": params, "assignments": assignments, "fitness": fits, "collapsed": False,
            "names": list(names)}


def run_calibration_workflow(scenarios, plan: CalibrationPlan = CalibrationPlan(), dataset: str = "synthetic",
                             artifacts: Optional[dict] = None) -> dict:
    """Run the requested stages; returns all artifacts (earlier ones included)."""
    scenarios = list(scenarios)
    if not scenarios:
        raise CalibrationError("no scenarios")
    arts = dict(artifacts or {})
    check_dependencies(plan.stages, arts)
    sfm0, game0 = defaults(dataset)

    def universal():
        return apply_values(sfm0, game0, arts["S1"]["values"])

    k_range = range(1, 9)
    for stage in sorted(plan.stages, key=STAGES.index):
        log.info("stage %s", stage)
        if stage == "S1":
            arts["S1"] = _universal(scenarios, plan, sfm0, game0)
        elif stage == "S2":
            arts["S2"] = _individual(scenarios, plan, *universal())
        elif stage == "S3":
            m = _matrix_of(arts["S2"])
            if _degenerate(m):
                res = _single_group(m, clustering.PCA_KMEANS)
            else:
                res = clustering.pca_kmeans(m, plan.k, plan.variance_threshold, derive_seed(plan.seed, "S3"),
                                            k_range=range(1, min(9, len(m) + 1)))
            arts["S3"] = {**res.to_dict(), "assignments": dict(zip(arts["S2"]["rows"], map(int, res.assignments)))}
        elif stage == "S4":
            m = _matrix_of(arts["S2"])
            if _degenerate(m):
                arts["S4"] = {"selected": [], "scores": [], "k": 1, "flagged": True}
                continue
            z, _, _ = clustering.standardize(m)
            seed = derive_seed(plan.seed, "S4")
            flagged = False
            k = plan.k
            if k is None:
                k, flagged = clustering.elbow_select_k(z, range(1, min(9, len(m) + 1)), seed)
                k = max(2, k)
            fs = clustering.forward_select_kmeans(z, k, plan.c_s, seed, arts["S2"]["columns"])
            arts["S4"] = {"selected": list(fs.columns), "scores": fs.scores, "k": k, "flagged": fs.flagged or flagged}
        elif stage == "S6":
            cols = arts["S2"]["columns"]
            m = _matrix_of(arts["S2"])
            z, _, _ = clustering.standardize(m)
            if not arts["S4"]["selected"]:
                res = _single_group(m, clustering.FS_KMEANS)
            else:
                sub = z[:, [cols.index(c) for c in arts["S4"]["selected"]]]
                seed = derive_seed(plan.seed, "S6")
                flagged = False
                k = plan.k
                if k is None:
                    k, flagged = clustering.elbow_select_k(sub, range(1, min(9, len(m) + 1)), seed)
                res = clustering.kmeans(sub, k, seed)
                res.method = clustering.FS_KMEANS
                res.columns = tuple(arts["S4"]["selected"])
                res.flagged = flagged
            arts["S6"] = {**res.to_dict(), "assignments": dict(zip(arts["S2"]["rows"], map(int, res.assignments)))}
        elif stage == "S5":
            arts["S5"] = _group_stage(scenarios, plan, *universal(), arts["S3"]["assignments"], plan.cluster_params, "S5")
        elif stage == "S7":
            arts["S7"] = _group_stage(scenarios, plan, *universal(), arts["S6"]["assignments"], arts["S4"]["selected"], "S7")
        elif stage == "S8":
            arts["S8"] = _group_stage(scenarios, plan, *universal(), arts["S6"]["assignments"], plan.cluster_params, "S8")
    return arts


def variant_params(artifacts: dict, variant: str, dataset: str = "synthetic") -> dict:
    """Parameter-file content for one model variant."""
    stage = VARIANT_STAGE[variant]
    if stage not in artifacts or "S1" not in artifacts:
        raise StageDependencyError(f"{variant} needs stage {stage}")
    sfm, game = apply_values(*defaults(dataset), artifacts["S1"]["values"])
    out = {"schema": "sharedspace.params/1", "dataset": dataset, "variant": variant,
           "sfm": dataclasses.asdict(sfm), "game": dataclasses.asdict(game)}
    if stage != "S1":
        art = artifacts[stage]
        out["groups"] = {"assignments": art["assignments"], "group_params": art["group_params"],
                         "collapsed": art["collapsed"]}
    return out


def bounds_file(bounds: Optional[dict] = None, dataset: str = "synthetic") -> str:
    bounds = bounds or DEFAULT_BOUNDS
    sfm, game = defaults(dataset)
    start = {**dataclasses.asdict(sfm), **dataclasses.asdict(game)}
    body = {
        "schema": "sharedspace.bounds/1",
        "dataset": dataset,
        "parameters": {n: {"lower": lo, "upper": hi, "default": start.get(n)} for n, (lo, hi) in bounds.items()},
    }
    return json.dumps(body, indent=2, sort_keys=True) + "\n"


def load_bounds(path) -> dict:
    with open(path) as fh:
        data = json.load(fh)
    return {n: (float(v["lower"]), float(v["upper"])) for n, v in data["parameters"].items()}
