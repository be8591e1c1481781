import random
import warnings

import pytest
from hypothesis import given, settings, strategies as st

from sweepwave.errors import InvalidParams, NonGenericParameters, OutOfHorizon
from sweepwave.limit import (BIRTH, DOMINANCE, _check_invariants, advance_wave,
                             birth_times, eval_path, init_state, run_limit,
                             wave_candidates)
from sweepwave.params import ModelParams


@pytest.fixture
def regime1():
    return run_limit(ModelParams(gamma=0.01, alpha=1.3), horizon=10)


def test_init_state():
    s = init_state(ModelParams(gamma=0.01, alpha=2.5))
    assert s.y == (2.5, 1.5, 0.5)
    assert (s.m, s.k, s.k_star) == (0, 2, 2)
    assert not _check_invariants(s)


def test_init_edge_at_level_one():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        s = init_state(ModelParams(gamma=0.1, alpha=2.0))
    assert s.y == (2.0, 1.0, 0.0)
    assert s.k_star == 2


def test_integer_alpha_warns():
    with pytest.warns(UserWarning):
        init_state(ModelParams(gamma=0.1, alpha=3.0))


def test_regime1_events(regime1):
    times = regime1.event_times
    assert times[:5] == pytest.approx([0.7, 1.0, 1.397, 1.697, 2.094], abs=1e-12)
    kinds = [e.kind for e in regime1.events[:4]]
    assert kinds == [BIRTH, DOMINANCE, BIRTH, DOMINANCE]
    assert [e.label for e in regime1.events[:4]] == [2, 1, 3, 2]


def test_regime1_birth_times(regime1):
    bt = birth_times(regime1)
    assert (bt[0].k, bt[0].b) == (1, 0.0)
    assert bt[1].k == 2 and bt[1].b == pytest.approx(0.7, abs=1e-12)
    assert bt[2].k == 3 and bt[2].b == pytest.approx(1.397, abs=1e-12)
    for b in bt[2:]:
        assert b.gap == pytest.approx(0.697, abs=1e-12)


def test_eval_path(regime1):
    assert eval_path(regime1, 0, 0.0) == 1.3
    assert eval_path(regime1, 1, 0.5) == pytest.approx(0.8)
    assert eval_path(regime1, 2, 0.5) == 0.0
    # type 2 grows at slope gamma_2/gamma = 2.01 after its birth
    assert eval_path(regime1, 2, 0.9) == pytest.approx(0.2 * 2.01)
    # type 0 declines at slope -1/1.01 after losing dominance, then stays at 0
    assert eval_path(regime1, 0, 1.5) == pytest.approx(1.3 - 0.5 / 1.01)
    assert eval_path(regime1, 0, 3.0) == 0.0
    assert regime1(1, 1.2) == 1.3
    with pytest.raises(OutOfHorizon):
        eval_path(regime1, 0, regime1.end_time + 1)
    with pytest.raises(OutOfHorizon):
        eval_path(regime1, 0, -0.1)


def test_eval_continuity(regime1):
    eps = 1e-9
    for s in regime1.event_times[:-1]:
        for j in range(regime1.max_type + 1):
            assert abs(regime1(j, s - eps) - regime1(j, s + eps)) < 1e-7


def test_eval_matches_snapshots(regime1):
    for snap in regime1.snapshots:
        for j, v in enumerate(snap.y):
            assert regime1(j, snap.s) == pytest.approx(v, abs=1e-12)


def test_regime2_first_gaps():
    path = run_limit(ModelParams(gamma=0.01, alpha=1.8), horizon=6)
    bt = {b.k: b for b in birth_times(path)}
    assert bt[2].b == pytest.approx(0.2, abs=1e-12)
    assert bt[3].gap == pytest.approx(0.4975124378109453, abs=1e-12)
    assert bt[4].gap == pytest.approx(0.3439962, abs=1e-7)


def test_candidates_initial():
    s = init_state(ModelParams(gamma=0.01, alpha=1.3))
    c = wave_candidates(s)
    assert list(c) == [1]
    assert c[1] == pytest.approx(0.7, rel=1e-13)


def test_tie_is_nongeneric():
    # alpha = r_2 makes type 1 fix exactly when type 2 reaches level 1
    p = ModelParams(gamma=0.01, alpha=1 + 0.01 / (1.01 ** 2 - 1))
    with pytest.raises(NonGenericParameters) as info:
        run_limit(p, horizon=5)
    assert info.value.wave_index == 1
    assert info.value.path.truncation == "nongeneric"
    assert len(info.value.path.events) == 1


def test_stop_rules():
    p = ModelParams(gamma=0.01, alpha=1.3)
    with pytest.raises(InvalidParams):
        run_limit(p)
    assert len(run_limit(p, max_waves=7).events) == 7
    path = run_limit(p, horizon=0)
    assert path.events == [] and path.end_time == 0.0
    assert path(0, 0.0) == 1.3


def test_growing_population_line():
    p = ModelParams(gamma=0.01, alpha=1.2, rho=0.0013)
    path = run_limit(p, horizon=10)
    for snap in path.snapshots:
        assert snap.y[snap.m] == snap.alpha_line
        assert snap.alpha_line == pytest.approx(1.2 + snap.s * 0.13, rel=1e-12)


def test_blowup_flag():
    path = run_limit(ModelParams(gamma=1.0, alpha=5.5), max_waves=10_000)
    assert path.truncation == "blowup"
    assert path.tstar_estimate == pytest.approx(sum(path.deltas))


@settings(max_examples=60, deadline=None)
@given(st.floats(0.005, 1.0), st.floats(1.01, 4.0), st.floats(0.0, 0.05))
def test_invariants_random(g, a, rho):
    if abs(a - round(a)) < 1e-6:
        return
    p = ModelParams(gamma=g, alpha=a, rho=rho)
    state = init_state(p)
    for _ in range(40):
        try:
            ev, state = advance_wave(state)
        except NonGenericParameters:
            return
        assert ev.delta > 0
        assert not _check_invariants(state)
        assert all(v <= state.alpha_line for v in state.y)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.005, 0.5), st.floats(1.01, 2.9))
def test_path_values_bounded(g, a):
    if abs(a - round(a)) < 1e-6:
        return
    p = ModelParams(gamma=g, alpha=a)
    try:
        path = run_limit(p, horizon=5, max_waves=200)
    except NonGenericParameters:
        return
    rng = random.Random(1)
    for _ in range(50):
        t = rng.uniform(0, path.end_time)
        for j in range(path.max_type + 1):
            assert 0.0 <= path(j, t) <= a + 1e-9


@pytest.mark.parametrize("g", [0.01, 0.05, 0.1])
def test_regime1_oracle_random(g):
    import numpy as np
    p0 = ModelParams(gamma=g, alpha=1.1)
    r2 = 1 + g / ((1 + g) ** 2 - 1)
    for a in np.random.default_rng(int(g * 100)).uniform(1.0, r2, 20):
        path = run_limit(p0.replace(alpha=float(a)), horizon=8)
        beta = (2 + g) - (1 + g) * a
        bt = birth_times(path)
        assert bt[1].gap == pytest.approx(2 - a, abs=1e-9)
        for b in bt[2:]:
            assert b.gap == pytest.approx(beta, abs=1e-9)


@pytest.mark.parametrize("p", [ModelParams(gamma=0.01, alpha=1.2, rho=0.0013),
                               ModelParams(gamma=0.1, alpha=2.4, rho=0.02),
                               ModelParams(gamma=0.05, alpha=1.7)])
def test_dominant_tracks_population_line(p):
    path = run_limit(p, horizon=6)
    times = [0.0] + path.event_times
    for a, b in zip(times, times[1:]):
        t = 0.5 * (a + b)
        vals = [path(j, t) for j in range(path.max_type + 1)]
        line = path.alpha_line(t)
        assert max(vals) == pytest.approx(line, abs=1e-12)
        assert sum(1 for v in vals if abs(v - line) <= 1e-12) == 1
