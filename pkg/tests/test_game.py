import dataclasses
import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from conftest import car, ped
from sharedspace import game as G
from sharedspace.forces import DirectiveKind
from sharedspace.game import FeatureVector, PayoffMatrix, StrategyKind
from sharedspace.params import GameParams, SfmParams

C, D, V = StrategyKind.CONTINUE, StrategyKind.DECELERATE, StrategyKind.DEVIATE
TABLE = G.PayoffTable.load()


# -- leader ----------------------------------------------------------------


def test_car_leads_pedestrians():
    parts = [ped(1, (0, 0), vel=(1.3, 0)), car(2, (5, 5)), ped(3, (1, 1), vel=(1.3, 0))]
    assert G.select_leader(parts) == 2


def test_first_recognising_car_leads():
    parts = [car(1, (0, 0), vel=(6, 0)), car(2, (5, 5)), ped(3, (1, 1))]
    assert G.select_leader(parts, first_recognizer=2) == 2


def test_equal_speed_lower_id():
    parts = [ped(4, (0, 0), vel=(1, 0)), ped(2, (1, 0), vel=(0, 1))]
    assert G.select_leader(parts) == 2


def test_leader_needs_two():
    with pytest.raises(ValueError):
        G.select_leader([car(1, (0, 0))])


# -- features --------------------------------------------------------------


@pytest.mark.parametrize("theta, cls", [(10, 8), (100, 1), (0, 8), (16, 7), (42, 7), (50, 6), (80, 5), (300, 6), (344, 7), (350, 8)])
def test_angle_class(theta, cls):
    assert G.angle_class(theta) == cls


@given(st.floats(0, 360, exclude_max=True))
def test_angle_class_is_total(theta):
    assert G.angle_class(theta) in (8, 7, 6, 5, 1)


def test_min_dist_boundary():
    gp = GameParams()
    i, j = car(1, (0, 0)), ped(2, (gp.g_min_dis, 0))
    assert G.compute_features(i, j, gp).min_dist == 0.0
    j = ped(2, (gp.g_min_dis - 1.5, 0))
    assert G.compute_features(i, j, gp).min_dist == pytest.approx(1.5)


def test_features_examples():
    gp = GameParams()
    # pedestrian 10 degrees off the car's heading
    th = np.deg2rad(10)
    i = ped(1, (5 * np.cos(th), 5 * np.sin(th)), vel=(2.0, 0), v_d=1.3)
    j = car(2, (0, 0), vel=(2, 0), v_d=5)
    f = G.compute_features(i, j, gp, noai=3, car_stopped=True)
    assert f.angle_class == 8
    assert f.own_speed == 1.0  # above 1.2 * v_d
    assert f.competitor_speed == 1  # car slower than desired
    assert f.noai == 0 and f.car_stopped == 0  # car-only features
    g = G.compute_features(j, i, gp, noai=3, car_stopped=True)
    assert (g.noai, g.car_stopped, g.own_speed) == (3, 1, 2.0)


def test_feature_vector_rejects_bad_class():
    with pytest.raises(ValueError):
        FeatureVector(angle_class=3)


# -- payoffs ---------------------------------------------------------------


def _pair(feat_car=FeatureVector(), feat_ped=FeatureVector()):
    c, p = car(1, (0, 0)), ped(2, (5, 5))
    return c, p, {(1, 2): feat_car, (2, 1): feat_ped}


def test_zero_features_give_base_ordinals():
    # angle_class is never zero, so silence its weights instead
    gp = dataclasses.replace(GameParams(), g_f_angle=0.0, g_ace_angle=0.0, g_dec_angle=0.0, g_dev_angle=0.0)
    c, p, feats = _pair()
    m = G.build_payoff_matrix(c, [p], feats, gp, TABLE)
    for a, s_l in enumerate(m.leader_strategies):
        for b, s_f in enumerate(m.follower_strategies[0]):
            assert m.leader_payoffs[a, b] == TABLE.base_value(c.kind, p.kind, "leader", s_l, s_f)
            assert m.follower_payoffs[0][a, b] == TABLE.base_value(c.kind, p.kind, "follower", s_l, s_f)


def test_car_stopped_adjusts_decelerate_cells():
    gp = dataclasses.replace(GameParams(), g_stopped=2.0)
    c, p, base_f = _pair()
    base = G.build_payoff_matrix(c, [p], base_f, gp, TABLE)
    _, _, feats = _pair(FeatureVector(car_stopped=1))
    m = G.build_payoff_matrix(c, [p], feats, gp, TABLE)
    diff = m.leader_payoffs - base.leader_payoffs
    assert np.all(diff[0] == 0) and np.all(diff[1] == 2.0)
    assert np.array_equal(m.follower_payoffs[0], base.follower_payoffs[0])


def test_doubling_weights_doubles_adjustments():
    gp = GameParams()
    gp2 = GameParams(**{f.name: 2 * getattr(gp, f.name) for f in dataclasses.fields(gp)})
    fv = FeatureVector(noai=2, car_stopped=1, min_dist=0.0, competitor_speed=1, own_speed=3.0, angle_class=7)
    fp = FeatureVector(competitor_speed=1, own_speed=1.0, angle_class=6)
    c, p, _ = _pair()
    feats = {(1, 2): fv, (2, 1): fp}
    zero = G.build_payoff_matrix(c, [p], {(1, 2): FeatureVector(angle_class=1), (2, 1): FeatureVector(angle_class=1)},
                                 GameParams(**{f.name: 0.0 for f in dataclasses.fields(gp)}), TABLE)
    m1 = G.build_payoff_matrix(c, [p], feats, gp, TABLE)
    m2 = G.build_payoff_matrix(c, [p], feats, gp2, TABLE)
    # min_dist carries a unit weight; it is zero here so every term scales
    assert m2.leader_payoffs - zero.leader_payoffs == pytest.approx(2 * (m1.leader_payoffs - zero.leader_payoffs))
    assert m2.follower_payoffs[0] - zero.follower_payoffs[0] == pytest.approx(
        2 * (m1.follower_payoffs[0] - zero.follower_payoffs[0]))


def test_missing_base_cell():
    bad = G.PayoffTable.from_dict({"base": {"car>ped": {"leader": {}, "follower": {}}}})
    c, p, feats = _pair()
    with pytest.raises(G.GameConfigError, match="missing base payoff"):
        G.build_payoff_matrix(c, [p], feats, GameParams(), bad)


def test_unknown_weight_rejected():
    with pytest.raises(G.GameConfigError):
        G.PayoffTable.from_dict({"base": {}, "features": [{"feature": "noai", "kind": "car", "strategy": "Continue", "weight": "nope"}]})


# -- solving ---------------------------------------------------------------


def _matrix(ul, ufs):
    ul = np.asarray(ul, dtype=float)
    n_l = ul.shape[0]
    S = (C, D, V)
    return PayoffMatrix(0, tuple(range(1, len(ufs) + 1)), S[:n_l],
                        tuple(S[: np.asarray(u).shape[1]] for u in ufs), ul,
                        tuple(np.asarray(u, dtype=float) for u in ufs))


def test_dominant_leader_strategy():
    m = _matrix([[5, 5], [1, 1]], [[[0, 1], [1, 0]]])
    s_l, _ = G.solve_stackelberg(m)
    assert s_l == 0


def test_ties_prefer_strategy_order():
    m = _matrix([[1, 1], [1, 1]], [[[2, 2], [2, 2]]])
    assert G.solve_stackelberg(m) == (0, (0,))


def _oracle(m):
    """Independent SPNE by brute force over the product space."""
    n_l = len(m.leader_strategies)
    best, arg = -np.inf, None
    for s_l in range(n_l):
        resp = []
        for fp in m.follower_payoffs:
            row = list(fp[s_l])
            resp.append(row.index(max(row)))
        for prof in itertools.product(*(range(len(s)) for s in m.follower_strategies)):
            if tuple(prof) != tuple(resp):
                continue
            u = m.leader_payoffs[(s_l, *prof)]
            if u > best:
                best, arg = u, (s_l, tuple(prof))
    return arg


@st.composite
def matrices(draw):
    n_l = draw(st.integers(1, 3))
    m = draw(st.integers(1, 3))
    sizes = [draw(st.integers(1, 3)) for _ in range(m)]
    ints = st.integers(-5, 5)
    ul = draw(hnp.arrays(float, (n_l, *sizes), elements=ints))
    ufs = [draw(hnp.arrays(float, (n_l, s), elements=ints)) for s in sizes]
    return _matrix(ul, ufs)


@settings(max_examples=300, deadline=None)
@given(matrices())
def test_solver_matches_enumeration(m):
    got = G.solve_stackelberg(m)
    assert got == _oracle(m)
    assert got == G.solve_by_enumeration(m)


def test_random_3x3_example():
    rng = np.random.default_rng(11)
    m = _matrix(rng.integers(0, 9, (3, 3)), [rng.integers(0, 9, (3, 3))])
    assert G.solve_stackelberg(m) == _oracle(m)


def test_two_followers_example():
    rng = np.random.default_rng(12)
    m = _matrix(rng.integers(0, 9, (2, 3, 3)), [rng.integers(0, 9, (2, 3)), rng.integers(0, 9, (2, 3))])
    assert G.solve_stackelberg(m) == _oracle(m)


@settings(max_examples=150, deadline=None)
@given(matrices(), st.integers(-20, 20), st.integers(0, 3))
def test_constant_shift_invariance(m, c, who):
    if who == 0:
        m2 = dataclasses.replace(m, leader_payoffs=m.leader_payoffs + c)
    else:
        k = (who - 1) % len(m.follower_payoffs)
        f = list(m.follower_payoffs)
        f[k] = f[k] + c
        m2 = dataclasses.replace(m, follower_payoffs=tuple(f))
    assert G.solve_stackelberg(m2) == G.solve_stackelberg(m)


def test_solve_strategies_maps_ids():
    c, p, feats = _pair()
    m = G.build_payoff_matrix(c, [p], feats, GameParams(), TABLE)
    out = G.solve_strategies(m)
    assert set(out) == {1, 2}
    assert out[1] in (C, D)


# -- directives ------------------------------------------------------------


def test_car_decrate_examples():
    assert G.car_deceleration_rate(5, 20, 7.8) == pytest.approx(25 / 12.2)
    assert 5 - G.car_deceleration_rate(5, 20, 7.8) == pytest.approx(2.9508, abs=1e-4)
    assert 8 - G.car_deceleration_rate(8, 6, 7.8) == 4.0


@given(st.floats(0, 20), st.floats(0, 60), st.floats(0, 20))
def test_car_new_speed_at_least_half(speed, d, d_min):
    assert speed - G.car_deceleration_rate(speed, d, d_min) >= speed / 2 - 1e-12


def test_car_decelerate_directive(hbs):
    sfm, _ = hbs
    c = car(1, (0, 0), vel=(5, 0))
    d = G.strategy_directive(c, D, ped(2, (20, 0)), sfm)
    assert d.kind is DirectiveKind.DECELERATE and d.speed == pytest.approx(5 - 25 / 12.2)
    assert G.strategy_directive(c, C, ped(2, (20, 0)), sfm).kind is DirectiveKind.FREE


def test_car_cannot_deviate():
    with pytest.raises(ValueError):
        G.strategy_directive(car(1, (0, 0)), V, ped(2, (5, 0)), SfmParams())


def test_pedestrian_decelerate():
    p = ped(1, (0, 0), vel=(1.2, 0))
    near = G.strategy_directive(p, D, car(2, (1.3 + 0.5, 0)), SfmParams())
    assert near.kind is DirectiveKind.STOP and near.speed == 0.0
    far = G.strategy_directive(p, D, car(2, (10, 0)), SfmParams())
    assert far.kind is DirectiveKind.DECELERATE and far.speed == pytest.approx(0.6)


def test_pedestrian_continue_crosses_in_front():
    sfm = SfmParams()
    p = ped(1, (3, -5), dest=(3, 5))
    c = car(2, (0, 0), heading=(1, 0))
    d = G.strategy_directive(p, C, c, sfm)
    assert d.kind is DirectiveKind.STEER and d.point == pytest.approx((sfm.s_a, 0))
    far = ped(1, (30, -5), dest=(30, 5))
    assert G.strategy_directive(far, C, c, sfm).kind is DirectiveKind.FREE


def test_pedestrian_deviate_passes_behind():
    sfm = SfmParams()
    c = car(2, (0, 0), heading=(1, 0))
    d = G.strategy_directive(ped(1, (3, -3)), V, c, sfm)
    assert d.point == pytest.approx((-sfm.s_d, 0))
    out = G.strategy_directive(ped(1, (sfm.view_range + 5, 0)), V, c, sfm)
    assert out.kind is DirectiveKind.FREE
