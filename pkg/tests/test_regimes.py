import numpy as np
import pytest

from sweepwave.errors import ConditionViolated, OutOfRegime
from sweepwave.limit import birth_times, run_limit
from sweepwave.params import ModelParams, gamma_pow
from sweepwave.regimes import (S_j, blowup_certificate, r_infinity, regime1_closed_form,
                               regime2_recursion, regime3_conditions, regime3_fixed_point,
                               regime3_iterate, regime3_map, regime3_seed, regime_thresholds,
                               threshold)

G01 = ModelParams(gamma=0.01, alpha=1.3)


def brute_threshold(g, j):
    # direct sum of g / ((1+g)**i - 1)
    return sum(g / ((1 + g) ** i - 1) for i in range(1, j + 1))


def test_thresholds_oracle():
    assert threshold(G01, 1) == 1.0
    assert threshold(G01, 2) == pytest.approx(1.4975124378109443, rel=1e-14)
    assert threshold(G01, 3) == pytest.approx(1.8275345492924122, rel=1e-14)
    assert threshold(G01, 4) == pytest.approx(2.0738156432040724, rel=1e-14)
    for j in range(1, 9):
        assert threshold(G01, j) == pytest.approx(brute_threshold(0.01, j), rel=1e-12)


def test_r_infinity():
    p = ModelParams(gamma=0.1, alpha=1.3)
    assert r_infinity(p) == pytest.approx(3.0968347630, abs=1e-9)
    assert r_infinity(p) == pytest.approx(brute_threshold(0.1, 600), abs=1e-12)


def test_regime_index():
    assert regime_thresholds(G01).regime_index == 1
    assert regime_thresholds(G01.replace(alpha=1.8)).regime_index == 2
    rep = regime_thresholds(G01.replace(alpha=1.95))
    assert rep.regime_index == 3 and rep.conjectural
    assert rep.r(2) == threshold(G01, 2)


def test_regime1_closed_form():
    first, beta = regime1_closed_form(G01)
    assert first == pytest.approx(0.7)
    assert beta == pytest.approx(0.697, abs=1e-14)
    with pytest.raises(OutOfRegime):
        regime1_closed_form(G01.replace(alpha=1.8))


def test_regime2_values():
    res = regime2_recursion(G01.replace(alpha=1.8))
    betas, r_star, beta_inf, ok = res
    assert ok
    assert betas[2] == pytest.approx(0.01 / 0.0201)
    assert betas[3] == pytest.approx(0.3439962, abs=1e-7)
    assert r_star == pytest.approx(1.598675496688741, rel=1e-14)
    assert beta_inf == pytest.approx(0.3953377, abs=1e-7)
    # alternation around the limit
    d = [betas[j] - beta_inf for j in range(3, 20)]
    assert all(a * b < 0 for a, b in zip(d, d[1:]))
    with pytest.raises(OutOfRegime):
        regime2_recursion(G01)


def test_regime2_matches_engine():
    p = G01.replace(alpha=1.8)
    betas = regime2_recursion(p, j_max=30).betas
    gaps = {b.k: b.gap for b in birth_times(run_limit(p, horizon=15))}
    for j in range(2, 30):
        if j + 1 in gaps:
            assert gaps[j + 1] == pytest.approx(betas[j], abs=1e-9)


def test_regime3_seed_and_phase_one_match_engine():
    p = G01.replace(alpha=1.95)
    x, y = regime3_seed(p)
    path = run_limit(p, max_waves=6)
    # third wave ends with the birth of type 4 while type 0 is dominant
    snap = path.snapshots[3]
    assert path.events[2].label == 4 and snap.m == 0
    assert snap.y[1] == pytest.approx(x, abs=1e-12)
    assert snap.y[2] == pytest.approx(y, abs=1e-12)
    # first phase: type k-3 reaches alpha after t1, others move linearly
    step = regime3_map(p, (x, y))
    g = p.gamma
    after = path.snapshots[4].y
    assert path.events[3].delta == pytest.approx(step.t1, abs=1e-12)
    assert after[2] == pytest.approx(y + step.t1 * gamma_pow(p, 2) / g, abs=1e-12)
    assert after[3] == pytest.approx(1 + step.t1 * gamma_pow(p, 3) / g, abs=1e-12)
    assert after[4] == pytest.approx(step.t1 * gamma_pow(p, 4) / g, abs=1e-12)


def test_regime3_condition_3c_fails_like_engine():
    p = G01.replace(alpha=1.95)
    x, y = regime3_seed(p)
    conds = regime3_conditions(p, x, y)
    assert conds == {"3a": True, "3b": True, "3c": False}
    path = run_limit(p, max_waves=6)
    # engine: type k-2 reaches alpha before type k-1 reaches level 1
    assert path.events[4].kind == "dominance" and path.events[4].label == 2
    assert path.events[4].delta < regime3_map(p, (x, y)).t2
    with pytest.raises(ConditionViolated) as info:
        regime3_iterate(p, 30)
    assert info.value.index == 0


def test_regime3_map_contracts():
    p = G01.replace(alpha=1.95)
    its = regime3_iterate(p, 60, strict=False)
    fp = regime3_fixed_point(p)
    assert np.allclose(its[-1], fp, atol=1e-9)
    step = regime3_map(p, fp)
    assert (step.new_x, step.new_y) == pytest.approx(fp, abs=1e-10)


def test_regime3_out_of_regime():
    with pytest.raises(OutOfRegime):
        regime3_map(G01, (1.5, 1.2))


def test_S_j_values():
    p = ModelParams(gamma=1.0, alpha=5.5)
    assert S_j(p, 1) == pytest.approx(1.6066951524152913, abs=1e-9)
    vals = [S_j(p, j) for j in range(1, 30)]
    assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))
    assert max(vals) <= 2.0 + 1e-9


def test_blowup_certificate():
    c = blowup_certificate(ModelParams(gamma=1.0, alpha=5.5))
    assert c.certified and c.a == 5 and c.S == 2.0
    assert c.tstar_bound == pytest.approx(sum(1 / (2.0 ** (5 + n) - 1) for n in range(200)))
    assert not blowup_certificate(G01).certified
    assert blowup_certificate(G01).tstar_bound is None


def test_threshold_increments():
    for g in (0.01, 0.3, 2.0):
        p = ModelParams(gamma=g, alpha=1.3)
        for j in range(1, 10):
            assert threshold(p, j + 1) - threshold(p, j) == pytest.approx(g / gamma_pow(p, j + 1), rel=1e-12)


def test_regime2_contraction():
    p = G01.replace(alpha=1.7)
    res = regime2_recursion(p, j_max=30)
    assert 0 < res.ell < 1
    xs = res.iterates
    for x, nxt in zip(xs, xs[1:]):
        assert abs(nxt - res.r_star) == pytest.approx(res.ell * abs(x - res.r_star), rel=1e-9, abs=1e-15)
        assert threshold(p, 2) <= x < p.alpha


@pytest.mark.parametrize("g,a", [(1.0, 5.5), (0.3, 10.3), (0.1, 49.5)])
def test_blowup_first_wave(g, a):
    p = ModelParams(gamma=g, alpha=a)
    cert = blowup_certificate(p)
    d = run_limit(p, max_waves=10_000).deltas
    assert d[0] == pytest.approx((1 - (a - cert.a)) * g / gamma_pow(p, cert.a), rel=1e-12)
