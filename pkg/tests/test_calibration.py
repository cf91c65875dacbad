import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sharedspace import calibration as K
from sharedspace.calibration import CalibrationPlan, GaConfig
from sharedspace.params import apply_values, defaults
from sharedspace.scenario import AgentKind, AgentTrack, Scenario
from sharedspace.simulation import SimConfig, SimTrack
from sharedspace.synthetic import crossing_scenario, planted_scenario, random_template, template

SFM, GAME = defaults("HBS")


def sphere(x):
    return float(np.dot(x, x))


# -- GA --------------------------------------------------------------------


def test_ga_sphere():
    r = K.ga_optimize(sphere, [(-5, 5)] * 3, GaConfig(generations=200, stagnation=200, seed=0))
    assert np.linalg.norm(r.best.values) < 1e-2
    assert r.generations <= 200


def test_ga_clones_without_mutation_keep_trace_constant():
    cfg = GaConfig(population=10, generations=15, mutation_rate=0.0, stagnation=100)
    r = K.ga_optimize(sphere, [(-5, 5)] * 3, cfg, initial=[[1.0, 2.0, 3.0]] * 10)
    assert r.trace == [14.0] * len(r.trace)
    assert r.best.values == (1.0, 2.0, 3.0)


def test_ga_same_seed_same_trace():
    a = K.ga_optimize(sphere, {"a": (-5, 5), "b": (0, 2)}, GaConfig(generations=30, seed=7))
    b = K.ga_optimize(sphere, {"a": (-5, 5), "b": (0, 2)}, GaConfig(generations=30, seed=7))
    assert a.trace == b.trace and a.best == b.best


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_ga_respects_bounds_and_trace_is_monotone(seed):
    box = [(-1.0, 0.5), (2.0, 3.0)]
    seen = []

    def f(x):
        seen.append(np.array(x))
        return float(np.sum((x - 10) ** 2))

    r = K.ga_optimize(f, box, GaConfig(population=8, generations=12, mutation_scale=1.0, seed=seed))
    arr = np.array(seen)
    assert np.all(arr[:, 0] >= -1) and np.all(arr[:, 0] <= 0.5)
    assert np.all(arr[:, 1] >= 2) and np.all(arr[:, 1] <= 3)
    assert all(b <= a for a, b in zip(r.trace, r.trace[1:]))


def test_ga_non_finite_objective_is_worst(caplog):
    def f(x):
        return math.nan if x[0] > 0 else float(x[0] ** 2)

    r = K.ga_optimize(f, [(-1, 1)], GaConfig(population=10, generations=5, seed=1))
    assert math.isfinite(r.fitness) and r.best.values[0] <= 0
    assert "treated as worst" in caplog.text


def test_ga_config_validation():
    with pytest.raises(ValueError):
        GaConfig(population=1)
    with pytest.raises(ValueError):
        GaConfig(mutation_rate=1.5)


def test_parameter_vector_bounds():
    with pytest.raises(K.CalibrationError):
        K.ParameterVector(("v_pc",), (50.0,), ((0.0, 20.0),))
    pv = K.ParameterVector.from_dict({"v_pc": 3.0, "s_d": 4.0})
    sfm, _ = pv.apply(SFM, GAME)
    assert (sfm.v_pc, sfm.s_d) == (3.0, 4.0)
    assert pv.cluster_mask == (False, True, False, False, False, False, True)


# -- fitness: position -----------------------------------------------------


def _track(aid, pos, dt=0.5):
    return AgentTrack(aid, AgentKind.PEDESTRIAN, np.asarray(pos, dtype=float), dt)


def _sim(aid, pos, dt=0.5):
    pos = np.asarray(pos, dtype=float)
    return SimTrack(aid, AgentKind.PEDESTRIAN, np.arange(len(pos)) * dt, pos, True, False)


def test_nested_mean_examples():
    assert K.nested_mean([[1.0]]) == 1.0
    assert K.nested_mean([[1.0], [3.0]]) == 2.0
    assert K.nested_mean([[1.0, 3.0], [4.0]]) == 3.0  # agents first, then scenarios
    with pytest.raises(K.CalibrationError, match="no overlapping"):
        K.nested_mean([[], []])


def test_agent_errors_constant_offset():
    real = np.column_stack([np.arange(6.0), np.zeros(6)])
    sc = Scenario("c", "synthetic", (_track(1, real),))
    errs = K.agent_errors(sc, {1: _sim(1, real + (0, 1))})
    assert errs == {1: pytest.approx(1.0)}
    assert K.agent_errors(sc, {1: _sim(1, real)}) == {1: 0.0}


def test_position_fitness_zero_on_own_output():
    tmpl = random_template("p", np.random.default_rng(2), n_peds=(2, 2))
    planted = planted_scenario(tmpl, SFM, GAME)
    assert K.fitness_position([planted], SFM, GAME) == 0.0
    other = SFM.replace(v_pc=SFM.v_pc * 0.3, sigma_pc=0.2, tau=1.5)
    assert K.fitness_position([planted], other, GAME) > 0.0


# -- fitness: individual ---------------------------------------------------


def _apart():
    """Two pedestrians too far apart to influence each other."""
    rows = [(1, AgentKind.PEDESTRIAN, (0.0, 0.0), (12.0, 0.0), 1.3), (2, AgentKind.PEDESTRIAN, (0.0, 40.0), (12.0, 40.0), 1.1)]
    return planted_scenario(template("apart", rows, pad=10), SFM, GAME)


def test_individual_fitness_zero_on_replay():
    assert K.fitness_individual(_apart(), 2, SFM, GAME) == 0.0
    # with an interacting car the replayed neighbour sits on the 0.5 s samples
    sc = planted_scenario(crossing_scenario(), SFM, GAME)
    assert K.fitness_individual(sc, 2, SFM, GAME) < 1e-5


def test_individual_neighbours_are_replayed():
    sc = planted_scenario(crossing_scenario(), SFM, GAME)
    car = sc.track(1)
    dt = SimConfig().dt
    checked = []

    def probe(w):
        if 1 in w.agents:
            t = w.clock - dt
            if car.t0 <= t <= car.t_end:
                assert w.agents[1].position == pytest.approx(car.position_at(t), abs=1e-9)
                checked.append(t)

    # a very different target still sees the recorded car
    K.fitness_individual(sc, 2, SFM.replace(tau=1.9, v_pc=1.0), GAME, world_hook=probe)
    assert len(checked) > 10


def test_individual_constant_offset():
    sc = _apart()
    moved = tuple(AgentTrack(t.id, t.kind, t.positions + (0.3, 0.4), t.dt, t.t0, t.radius) if t.id == 2 else t
                  for t in sc.tracks)
    shifted = Scenario(sc.id, sc.dataset, moved, sc.obstacles, profiles=sc.profiles, decisions=sc.decisions)
    assert K.fitness_individual(shifted, 2, SFM, GAME) == pytest.approx(0.5, rel=1e-9)


# -- fitness: decisions ----------------------------------------------------


def test_decision_score_examples():
    assert K.decision_score({1: "Continue", 2: "Deviate"}, {1: "Continue", 2: "Deviate"}) == 1.0
    assert K.decision_score({1: "Continue", 2: "Deviate"}, {1: "Decelerate", 2: "Continue"}) == -1.0
    assert K.decision_score({1: "Continue", 2: "Deviate"}, {1: "Continue", 2: "Continue"}) == 0.0


def test_decision_missing_annotation_excluded(caplog):
    assert K.decision_score({1: "Continue", 2: None}, {1: "Continue", 2: "Deviate"}) == 1.0
    assert "excluded" in caplog.text
    assert K.decision_score({2: None}, {}) is None


@given(st.dictionaries(st.integers(1, 9), st.sampled_from(["Continue", "Decelerate", "Deviate"]), min_size=1),
       st.dictionaries(st.integers(1, 9), st.sampled_from(["Continue", "Decelerate", "Deviate"])))
def test_decision_score_bounded(ann, sim):
    s = K.decision_score(ann, sim)
    assert -1.0 <= s <= 1.0


def test_decision_fitness_on_own_output():
    sc = planted_scenario(crossing_scenario(), SFM, GAME)
    assert K.fitness_decision([sc], SFM, GAME) == 1.0
    flipped = {k: ("Decelerate" if v != "Decelerate" else "Continue") for k, v in sc.decisions.items()}
    bad = dataclasses.replace(sc, decisions=flipped)
    assert K.fitness_decision([bad], SFM, GAME) == -1.0


# -- workflow --------------------------------------------------------------


TINY = GaConfig(population=4, generations=2, stagnation=2)


def _data():
    # the second pedestrian of each scenario walks with other parameters
    rng = np.random.default_rng(9)
    other = SFM.replace(v_pc=3.0, sigma_pc=0.3, s_d=3.0)
    out = []
    for i in range(2):
        tmpl = random_template(f"w{i}", rng, n_peds=(2, 2))
        peds = [t.id for t in tmpl.pedestrians()]
        out.append(planted_scenario(tmpl, SFM, GAME, agent_params={peds[1]: other}))
    return out


def _plan(**kw):
    base = dict(ga=TINY, ga_individual=TINY, universal_sfm=("v_pc",), universal_game=("g_noai",),
                cluster_params=("v_pc", "sigma_pc", "s_d"), k=2)
    base.update(kw)
    return CalibrationPlan(**base)


def test_stage_dependencies():
    with pytest.raises(K.StageDependencyError, match="S3 needs S2"):
        K.check_dependencies(("S3",), {})
    with pytest.raises(K.StageDependencyError):
        K.check_dependencies(("S7",), {"S1": {}, "S2": {}, "S4": {}})
    K.check_dependencies(("S1", "S2", "S3", "S4", "S5", "S6", "S7", "S8"), {})
    with pytest.raises(K.StageDependencyError):
        K.run_calibration_workflow(_data(), _plan(stages=("S5",)), "HBS")


def test_unknown_stage_and_bounds():
    with pytest.raises(K.CalibrationError):
        CalibrationPlan(stages=("S9",))
    with pytest.raises(K.CalibrationError):
        CalibrationPlan(cluster_params=("nope",))


@pytest.fixture(scope="module")
def workflow():
    data = _data()
    return data, K.run_calibration_workflow(data, _plan(), "HBS")


def test_workflow_artifacts(workflow):
    data, arts = workflow
    assert set(arts) == set(K.STAGES)
    rows = arts["S2"]["rows"]
    assert rows == [f"{sc.id}:{t.id}" for sc in data for t in sc.pedestrians()]
    for stage in ("S3", "S6"):
        assert set(arts[stage]["assignments"]) == set(rows)
    for stage in ("S5", "S7", "S8"):
        assert set(arts[stage]["group_params"]) <= {"0", "1"}


def test_s7_only_moves_selected_coordinates(workflow):
    _, arts = workflow
    selected = set(arts["S4"]["selected"])
    uni_sfm, uni_game = apply_values(SFM, GAME, arts["S1"]["values"])
    for params in arts["S7"]["group_params"].values():
        assert set(params) == selected
        sfm, game = apply_values(uni_sfm, uni_game, params)
        diff = {f.name for f in dataclasses.fields(sfm) if getattr(sfm, f.name) != getattr(uni_sfm, f.name)}
        assert diff <= selected and game == uni_game
    for params in arts["S8"]["group_params"].values():
        assert set(params) == {"v_pc", "sigma_pc", "s_d"}


def test_workflow_is_deterministic(workflow):
    data, arts = workflow
    again = K.run_calibration_workflow(data, _plan(), "HBS")
    assert again == arts


def test_variant_params(workflow):
    _, arts = workflow
    u = K.variant_params(arts, "GSFM_U", "HBS")
    assert u["schema"] == "sharedspace.params/1" and "groups" not in u
    assert u["sfm"]["v_pc"] == arts["S1"]["values"]["v_pc"]
    m3 = K.variant_params(arts, "GSFM_M3", "HBS")
    assert m3["groups"]["assignments"] == arts["S6"]["assignments"]
    with pytest.raises(K.StageDependencyError):
        K.variant_params({"S1": arts["S1"]}, "GSFM_M1", "HBS")


def test_single_group_collapses_to_universal():
    data = _data()
    assign = {f"{sc.id}:{t.id}": 0 for sc in data for t in sc.pedestrians()}
    out = K._group_stage(data, _plan(), SFM, GAME, assign, ("v_pc",), "S5")
    assert out["collapsed"] and out["group_params"] == {"0": {"v_pc": SFM.v_pc}}


def test_bounds_file_round_trip(tmp_path):
    p = tmp_path / "b.json"
    p.write_text(K.bounds_file(dataset="HBS"))
    assert K.load_bounds(p) == {k: tuple(map(float, v)) for k, v in K.DEFAULT_BOUNDS.items()}
