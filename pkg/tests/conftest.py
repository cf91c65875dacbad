import numpy as np
import pytest

from sharedspace.forces import make_state
from sharedspace.params import defaults
from sharedspace.scenario import AgentKind, InputProfile


def ped(aid, pos, vel=(0.0, 0.0), dest=(100.0, 0.0), v_d=1.3, heading=None, radius=0.3, **kw):
    prof = InputProfile(np.asarray(pos, dtype=float), np.asarray(dest, dtype=float), v_d)
    if heading is not None:
        kw["heading"] = heading
    return make_state(aid, AgentKind.PEDESTRIAN, pos, vel, radius, prof, **kw)


def car(aid, pos, vel=(5.0, 0.0), dest=(200.0, 0.0), v_d=5.0, heading=None, radius=1.0, **kw):
    prof = InputProfile(np.asarray(pos, dtype=float), np.asarray(dest, dtype=float), v_d)
    if heading is not None:
        kw["heading"] = heading
    return make_state(aid, AgentKind.CAR, pos, vel, radius, prof, **kw)


@pytest.fixture
def hbs():
    return defaults("HBS")
