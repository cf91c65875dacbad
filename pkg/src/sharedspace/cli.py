"""Command-line entry point.

    sharedspace simulate  --config run.json --seed 7 --out out/ [--plot] [--variant GSFM_U]
    sharedspace calibrate --config run.json --seed 7 --out out/ [--stages S1 S2 ...]
    sharedspace cluster   --config run.json --seed 7 --out out/ [--method pca|fs]
    sharedspace evaluate  --config run.json --seed 7 --out out/ [--variant ...]

Exit codes: 0 success, 1 internal error, 2 input error, 3 stage
dependency error, 4 missing artifact.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import calibration, clustering, metrics, synthetic
from .params import agent_params_for, defaults, load_param_file
from .plotting import clusters_svg, trajectories_svg
from .rng import derive_seed
from .scenario import AgentKind, ScenarioError, load_trajectories
from .simulation import SimConfig, SimTrack, run

log = logging.getLogger("sharedspace")

CONFIG_SCHEMA = "sharedspace.config/1"
VARIANTS = ("SFM_BASELINE", "GSFM_U", "GSFM_M1", "GSFM_M2", "GSFM_M3")
EXIT_OK, EXIT_INTERNAL, EXIT_INPUT, EXIT_DEPENDENCY, EXIT_MISSING = 0, 1, 2, 3, 4


class InputError(Exception):
    pass


class MissingArtifact(Exception):
    pass


@dataclasses.dataclass
class RunConfig:
    path: Path
    dataset: str
    scenarios: list
    variants: tuple
    params: dict
    sim: SimConfig
    raw: dict


def _resolve(base: Path, p) -> Path:
    p = Path(p)
    return p if p.is_absolute() else (base / p)


def load_config(path, seed: int) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise InputError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from None
    if raw.get("schema") != CONFIG_SCHEMA:
        raise InputError(f"{path}: expected \"schema\": \"{CONFIG_SCHEMA}\"")
    base = path.parent
    dataset = raw.get("dataset", "synthetic")
    if dataset not in ("HBS", "DUT", "CITR", "synthetic"):
        raise InputError(f"unknown dataset tag {dataset!r}")
    variants = tuple(raw.get("variants", ["GSFM_U"]))
    for v in variants:
        if v not in VARIANTS:
            raise InputError(f"unknown variant {v!r}; choose from {', '.join(VARIANTS)}")
    try:
        sim = SimConfig(**raw.get("sim", {}))
    except TypeError as exc:
        raise InputError(f"bad \"sim\" section: {exc}") from None
    params = {}
    for v, p in raw.get("params", {}).items():
        params[v] = _resolve(base, p)
    scenarios = _load_scenarios(raw, base, dataset, seed)
    return RunConfig(path, dataset, scenarios, variants, params, sim, raw)


def _load_scenarios(raw, base, dataset, seed):
    out = []
    for entry in raw.get("scenarios", []):
        p = _resolve(base, entry)
        if p.is_dir():
            files = sorted(q for q in p.glob("*.csv"))
        elif p.exists():
            files = [p]
        else:
            raise InputError(f"dataset path not found: {p}")
        for f in files:
            try:
                out.append(load_trajectories(f))
            except ScenarioError as exc:
                raise InputError(f"{f}: {exc}") from None
    syn = raw.get("synthetic")
    if syn:
        kind = syn.get("kind", "crossing")
        if kind == "crossing":
            out.append(synthetic.crossing_scenario())
        elif kind == "random":
            rng = np.random.default_rng(derive_seed(seed, "synthetic"))
            sfm, game = defaults(dataset)
            for i in range(int(syn.get("count", 4))):
                tm = synthetic.random_template(f"syn{i:03d}", rng)
                out.append(synthetic.planted_scenario(tm, sfm, game) if syn.get("planted", True) else tm)
        else:
            raise InputError(f"unknown synthetic kind {kind!r}")
    if not out:
        raise InputError("config lists no scenarios")
    ids = [s.id for s in out]
    if len(set(ids)) != len(ids):
        raise InputError("scenario ids are not unique")
    return out


def _variant_setup(cfg: RunConfig, variant: str):
    """``(sfm, game, groups, sim_config)`` for one variant."""
    if variant in cfg.params:
        if not cfg.params[variant].is_file():
            raise MissingArtifact(f"parameter file for {variant} not found: {cfg.params[variant]}")
        sfm, game, groups = load_param_file(cfg.params[variant], cfg.dataset)
    elif variant in ("SFM_BASELINE", "GSFM_U"):
        sfm, game = defaults(cfg.dataset)
        groups = {}
    else:
        raise MissingArtifact(f"{variant} needs a parameter file (\"params\" section of the config)")
    sim = cfg.sim
    if variant == "SFM_BASELINE":
        sim = dataclasses.replace(sim, games=False, car_rules=False, long_avoidance=False)
    return sfm, game, groups, sim


def _write_sim_csv(path: Path, tracks: dict) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["agent_id", "kind", "t", "x", "y", "status"])
        for aid in sorted(tracks):
            t = tracks[aid]
            status = "ghost" if t.ghost else ("partial" if t.partial else "done")
            for tt, (x, y) in zip(t.times, t.positions):
                w.writerow([aid, t.kind.value, repr(float(tt)), repr(float(x)), repr(float(y)), status])


def read_sim_csv(path: Path) -> dict:
    rows: dict = {}
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            aid = int(r["agent_id"])
            rows.setdefault(aid, {"kind": AgentKind(r["kind"]), "status": r["status"], "t": [], "x": []})
            rows[aid]["t"].append(float(r["t"]))
            rows[aid]["x"].append((float(r["x"]), float(r["y"])))
    out = {}
    for aid, d in rows.items():
        st = d["status"]
        out[aid] = SimTrack(aid, d["kind"], np.array(d["t"]), np.array(d["x"]).reshape(-1, 2),
                            st == "done", st == "partial", st == "ghost")
    return out


def cmd_simulate(cfg: RunConfig, seed: int, out: Path, plot: bool = False, variants=None) -> int:
    for variant in variants or cfg.variants:
        sfm, game, groups, sim = _variant_setup(cfg, variant)
        vdir = out / variant
        vdir.mkdir(parents=True, exist_ok=True)
        for sc in cfg.scenarios:
            sim_sc = sim
            if variant == "SFM_BASELINE":
                sim_sc = dataclasses.replace(sim, ghosts=frozenset(t.id for t in sc.cars()))
            ap = agent_params_for(sc.id, [t.id for t in sc.tracks], sfm, groups)
            res = run(sc, sfm, game, seed=derive_seed(seed, f"simulate:{variant}:{sc.id}"), config=sim_sc,
                      agent_params=ap)
            _write_sim_csv(vdir / f"{sc.id}.csv", res.tracks)
            (vdir / f"{sc.id}.events.jsonl").write_text(res.events_jsonl())
            if plot:
                (vdir / f"{sc.id}.svg").write_text(trajectories_svg(sc, res.tracks, f"{variant} {sc.id}"))
        log.info("simulated %d scenario(s) for %s", len(cfg.scenarios), variant)
    return EXIT_OK


def cmd_evaluate(cfg: RunConfig, seed: int, out: Path, variants=None) -> int:
    sim_dir = _resolve(cfg.path.parent, cfg.raw["sim_dir"]) if "sim_dir" in cfg.raw else out
    mcfg = metrics.MetricsConfig(**cfg.raw.get("metrics", {}))
    reports = []
    for variant in variants or cfg.variants:
        per = []
        for sc in cfg.scenarios:
            f = sim_dir / variant / f"{sc.id}.csv"
            if not f.is_file():
                raise MissingArtifact(f"simulation output missing: {f} (run simulate first)")
            per.append(metrics.evaluate_scenario(sc, read_sim_csv(f), mcfg))
        reports.append(metrics.aggregate(per, cfg.dataset, variant))
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.csv").write_text(metrics.metrics_csv(reports))
    return EXIT_OK


def _plan(cfg: RunConfig, seed: int, stages) -> calibration.CalibrationPlan:
    c = dict(cfg.raw.get("calibration", {}))
    kw = {"seed": seed, "sim": cfg.sim}
    if stages:
        kw["stages"] = tuple(stages)
    elif "stages" in c:
        kw["stages"] = tuple(c["stages"])
    for key in ("ga", "ga_individual"):
        if key in c:
            kw[key] = calibration.GaConfig(**c[key])
    for key in ("universal_sfm", "universal_game", "cluster_params"):
        if key in c:
            kw[key] = tuple(c[key])
    for key in ("k", "c_s", "variance_threshold", "game_fitness"):
        if key in c:
            kw[key] = c[key]
    if "bounds" in c:
        kw["bounds"] = calibration.load_bounds(_resolve(cfg.path.parent, c["bounds"]))
    try:
        return calibration.CalibrationPlan(**kw)
    except (TypeError, ValueError) as exc:
        raise InputError(f"bad \"calibration\" section: {exc}") from None


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _load_artifacts(cdir: Path) -> dict:
    arts = {}
    for s in calibration.STAGES:
        f = cdir / f"stage_{s}.json"
        if f.is_file():
            arts[s] = json.loads(f.read_text())
    return arts


def cmd_calibrate(cfg: RunConfig, seed: int, out: Path, stages=None) -> int:
    plan = _plan(cfg, seed, stages)
    cdir = out / "calibration"
    cdir.mkdir(parents=True, exist_ok=True)
    prior = _load_artifacts(cdir)
    # stages being re-run replace their old artifacts
    prior = {k: v for k, v in prior.items() if k not in plan.stages}
    arts = calibration.run_calibration_workflow(cfg.scenarios, plan, cfg.dataset, prior)
    for s in plan.stages:
        _dump(cdir / f"stage_{s}.json", arts[s])
    report = {"schema": "sharedspace.calibration/1", "dataset": cfg.dataset, "seed": seed,
              "stages": {s: arts[s] for s in calibration.STAGES if s in arts}}
    _dump(cdir / "report.json", report)
    (cdir / "bounds.json").write_text(calibration.bounds_file(plan.bounds, cfg.dataset))
    for variant, stage in calibration.VARIANT_STAGE.items():
        if stage in arts and "S1" in arts:
            _dump(cdir / f"params_{variant}.json", calibration.variant_params(arts, variant, cfg.dataset))
    return EXIT_OK


def cmd_cluster(cfg: RunConfig, seed: int, out: Path, method: str = "both") -> int:
    cdir = out / "calibration"
    if "calibration_dir" in cfg.raw:
        cdir = _resolve(cfg.path.parent, cfg.raw["calibration_dir"])
    s2 = cdir / "stage_S2.json"
    if not s2.is_file():
        raise calibration.StageDependencyError(f"individual calibration (S2) output not found: {s2}")
    art = json.loads(s2.read_text())
    m = np.asarray(art["values"], dtype=float)
    if m.ndim != 2 or len(m) < 2:
        raise InputError("insufficient rows")
    c = cfg.raw.get("clustering", {})
    k = c.get("k")
    rows, cols = art["rows"], art["columns"]
    odir = out / "clustering"
    odir.mkdir(parents=True, exist_ok=True)
    methods = ("pca", "fs") if method == "both" else (method,)
    z, _, _ = clustering.standardize(m)
    for meth in methods:
        s = derive_seed(seed, f"cluster:{meth}")
        kr = range(1, min(9, len(m) + 1))
        if meth == "pca":
            res = clustering.pca_kmeans(m, k, c.get("variance_threshold", 0.9), s, k_range=kr)
            pca = clustering.pca_reduce(z, c.get("variance_threshold", 0.9))
            pts, labels = pca.scores, ("pc1", "pc2" if pca.n_components > 1 else "")
            extra = {"explained_variance_ratio": [float(r) for r in pca.ratio[: pca.n_components]]}
        else:
            fs, res = clustering.fs_kmeans(m, k, c.get("c_s", 0.5), s, cols, k_range=kr)
            sel = list(fs.selected)
            pts = z[:, sel]
            labels = (fs.columns[0], fs.columns[1] if len(sel) > 1 else "")
            extra = {"selected": list(fs.columns), "scores": fs.scores}
        report = {"schema": "sharedspace.clustering/1", **res.to_dict(), **extra, "rows": rows, "seed": s,
                  "assignments": dict(zip(rows, (int(a) for a in res.assignments)))}
        _dump(odir / f"report_{meth}.json", report)
        (odir / f"clusters_{meth}.svg").write_text(clusters_svg(pts, res.assignments, labels, res.method))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sharedspace", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("simulate", "calibrate", "cluster", "evaluate"):
        s = sub.add_parser(name)
        s.add_argument("--config", required=True)
        s.add_argument("--seed", type=int, required=True)
        s.add_argument("--out", required=True)
        s.add_argument("-v", "--verbose", action="store_true")
        if name == "simulate":
            s.add_argument("--plot", action="store_true")
        if name in ("simulate", "evaluate"):
            s.add_argument("--variant", nargs="+", choices=VARIANTS)
        if name == "calibrate":
            s.add_argument("--stages", nargs="+", choices=calibration.STAGES)
        if name == "cluster":
            s.add_argument("--method", choices=("pca", "fs", "both"), default="both")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.seed < 0:
        print("error: --seed must be non-negative", file=sys.stderr)
        return EXIT_INPUT
    out = Path(args.out)
    try:
        cfg = load_config(args.config, args.seed)
        if args.command == "simulate":
            return cmd_simulate(cfg, args.seed, out, args.plot, args.variant)
        if args.command == "evaluate":
            return cmd_evaluate(cfg, args.seed, out, args.variant)
        if args.command == "calibrate":
            return cmd_calibrate(cfg, args.seed, out, args.stages)
        return cmd_cluster(cfg, args.seed, out, args.method)
    except (InputError, ScenarioError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except calibration.StageDependencyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEPENDENCY
    except MissingArtifact as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (clustering.ClusteringError, calibration.CalibrationError, metrics.MetricsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
