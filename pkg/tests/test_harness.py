import math

import numpy as np
import pytest

from sweepwave.errors import (DegenerateLog, InvalidParams, OutOfHorizon, StepTooLarge,
                              WindowOverlapsEvent)
from sweepwave.harness import (RescaledTrajectory, beerenwinkel_estimate, compare, log_plus,
                               logistic, rescale, snapshot_shift_error, sweep_alignment_error,
                               sweep_ode_solve, type_distribution_snapshot)
from sweepwave.limit import birth_times, run_limit
from sweepwave.moran import Sample, SimConfig, Trajectory, run_sim
from sweepwave.params import ModelParams, gamma_pow, log_scale

P = ModelParams(gamma=0.1, alpha=1.3, mu=1e-3)


def test_log_plus():
    assert list(log_plus([0, 1, math.e])) == [0.0, 0.0, 1.0]


def test_rescale_initial():
    tr = run_sim(SimConfig(P, seed=1, t_end=30.0, record_dt=1.0))
    rt = rescale(tr, P)
    assert rt.t[0] == 0.0
    assert abs(rt.F[0] - 1.3) < 1e-3
    assert abs(rt.Y[0][0] - 1.3) < 1e-3
    assert np.all(rt.y(0) <= rt.F + 1e-15)
    assert rt.t[-1] == pytest.approx(30.0 * 0.1 / log_scale(P).L)
    one = Trajectory([Sample(0.0, 2, {0: 1, 1: 1})], {0: 0.0, 1: 0.0}, 0, 0, 0, "t_end")
    assert rescale(one, P).Y[1][0] == 0.0


def _self_rescaled(path, L, ts):
    Y = {j: np.array([path(j, t) for t in ts]) for j in path.segments}
    births = {b.k: b.b for b in birth_times(path)}
    return RescaledTrajectory(np.asarray(ts), Y, np.full(len(ts), path.params.alpha), births, L, path.params)


def test_compare_self_is_zero():
    path = run_limit(P, horizon=3)
    ts = np.linspace(0, 2.5, 501)
    cells = [(mu, [_self_rescaled(path, -math.log(mu), ts)]) for mu in (1e-2, 1e-3)]
    rep = compare(cells, path, [(0.2, 0.6), (1.1, 1.3)], types=(0, 1, 2), birth_types=(2, 3))
    for c in rep.cells:
        assert all(v == [0.0] for v in c.deviations.values())
        assert all(v == [0.0] for v in c.birth_errors.values())
    assert rep.consistent
    d = rep.to_dict()
    assert d["verdict"] == "consistent with convergence"


def test_compare_rejects_bad_windows():
    path = run_limit(P, horizon=3)
    with pytest.raises(WindowOverlapsEvent):
        compare([(1e-3, [])], path, [(0.2, 0.68)])
    with pytest.raises(InvalidParams):
        compare([(1e-3, []), (1e-2, [])], path, [(0.2, 0.6)])
    with pytest.raises(InvalidParams):
        compare([(1e-3, [])], path, [(0.2, 9.0)])


def test_beerenwinkel():
    n0 = 1e-3 ** -1.3
    assert beerenwinkel_estimate(0, P, n0, n0) == 0.0
    s1 = beerenwinkel_estimate(1, P, n0, n0)
    L = log_scale(P).L
    assert s1 == pytest.approx(math.log(0.1 / 1e-3) ** 2 / (2 * 1.3 * 0.1 * L), rel=1e-12)
    assert beerenwinkel_estimate(6, P, 7944, 9000) == pytest.approx(2 * beerenwinkel_estimate(3, P, 7944, 9000))
    adj = beerenwinkel_estimate(1, P, n0, n0, moran_adjust=True)
    assert adj == pytest.approx(math.log(0.1 / 1e-3) ** 2 / (0.05 * 2 * 1.3 * L))
    with pytest.raises(DegenerateLog):
        beerenwinkel_estimate(1, ModelParams(gamma=1e-3, alpha=1.3, mu=1e-2), n0, n0)
    with pytest.raises(DegenerateLog):
        beerenwinkel_estimate(1, P, 1, 1)


def test_ode_half_start():
    sol = sweep_ode_solve(0.2, 0.1, 0.5, 200.0, 0.05)
    assert np.all(sol.r[1:] > 0.5)
    assert np.all(np.diff(sol.r) >= 0)
    assert sol.r[-1] == pytest.approx(1.0, abs=1e-12)


def test_ode_logistic_closed_form():
    lam = 0.1
    sol = sweep_ode_solve(lam, 0.0, 0.01, 200.0, 1e-3 / lam)
    assert np.max(np.abs(sol.r - logistic(sol.t, lam, 0.01))) < 1e-8


def test_ode_sandwich_and_transit():
    L = log_scale(P).L
    g1 = gamma_pow(P, 1)
    sol = sweep_ode_solve(g1, g1, L ** -2 / 2, 600.0, 0.01)
    assert sol.sandwich_ok(L)
    assert sol.transit_time(L) <= sol.transit_bound(L)


def test_ode_errors():
    with pytest.raises(StepTooLarge):
        sweep_ode_solve(1.0, 0.0, 0.5, 100.0, 10.0)
    with pytest.raises(InvalidParams):
        sweep_ode_solve(1.0, 0.0, 1.0, 1.0, 0.1)
    with pytest.raises(InvalidParams):
        sweep_ode_solve(-1.0, 0.0, 0.5, 1.0, 0.1)


def test_alignment_self():
    sol = sweep_ode_solve(0.1, 0.1, 1e-4, 400.0, 0.01)
    t = sol.t[::50] + 17.0
    assert sweep_alignment_error(t, sol.r[::50], sol) < 1e-3
    assert sweep_alignment_error(t, np.full(t.size, 0.3), sol) == math.inf


def test_snapshot_regime1_shift():
    path = run_limit(ModelParams(gamma=0.01, alpha=1.3), horizon=20)
    bt = {b.k: b.b for b in birth_times(path)}
    for k in (5, 6, 9):
        a, b = type_distribution_snapshot(path, [bt[k], bt[k + 4]])
        assert snapshot_shift_error(a, b, 4) < 1e-9
        assert sum(a.values()) == pytest.approx(1.0)
    with pytest.raises(OutOfHorizon):
        type_distribution_snapshot(path, [path.end_time + 1])


def test_snapshot_point_mass_and_simulated():
    path = run_limit(P.replace(alpha=1.05), horizon=0)
    [snap] = type_distribution_snapshot(path, [0.0], L=1000.0)
    assert snap[0] == pytest.approx(1.0)
    tr = run_sim(SimConfig(P, seed=2, t_end=40.0, record_dt=4.0))
    snaps = type_distribution_snapshot(tr, [0.0, 10.0, 40.0])
    assert snaps[0] == {0: 1.0}
    for s in snaps:
        assert sum(s.values()) == pytest.approx(1.0)
    with pytest.raises(OutOfHorizon):
        type_distribution_snapshot(tr, [41.0])


def test_sweep_shape_between_the_two_competing_types():
    # With type 2 already present the total frequency X1/N rarely completes
    # its sweep at mu = 1e-3; restricted to types 0 and 1 the ratio follows
    # the two-type equation.
    g1 = gamma_pow(P, 1)
    sol = sweep_ode_solve(g1, g1, 1e-4, 400.0, 0.01)
    from sweepwave.moran import run_ensemble
    res = run_ensemble(SimConfig(P, seed=808, t_end=4 * log_scale(P).time_unit, record_dt=0.5),
                       50, keep_trajectories=True)
    errs = []
    for r in res:
        tr = r.trajectory
        x0, x1 = tr.counts_of(0), tr.counts_of(1)
        live = (x0 + x1) > 0
        errs.append(sweep_alignment_error(tr.times[live], x1[live] / (x0 + x1)[live], sol))
    assert np.median(errs) < 0.1
