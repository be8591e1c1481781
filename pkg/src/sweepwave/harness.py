"""Compare simulations with the limit dynamics.

* :func:`rescale` maps a raw trajectory onto the ``(1/L) log+`` scale.
* :func:`compare` summarises deviations from a limit path over a grid of
  mutation rates.
* :func:`beerenwinkel_estimate` is the closed-form waiting-time
  approximation whose increments are linear in the type index.
* :func:`sweep_ode_solve` integrates the deterministic frequency equation
  of a single dominance change.
* :func:`type_distribution_snapshot` gives normalised type histograms.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (DegenerateLog, InvalidParams, OutOfHorizon, StepTooLarge,
                     WindowOverlapsEvent)
from .limit import PiecewisePath, birth_times, eval_path
from .moran import Trajectory
from .params import ModelParams, log_scale

DEFAULT_EPSILON = 0.05


@dataclass
class RescaledTrajectory:
    """Trajectory on the log scale; ``t`` in units of ``L/gamma``."""

    t: np.ndarray
    Y: dict
    F: np.ndarray
    births: dict
    L: float
    params: ModelParams

    def y(self, j: int) -> np.ndarray:
        return self.Y.get(j, np.zeros_like(self.t))


def log_plus(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 1
    out[pos] = np.log(x[pos])
    return out


def rescale(trajectory: Trajectory, params: ModelParams, mu: float | None = None) -> RescaledTrajectory:
    """``Y_j = log+(X_j) / L``, ``F = log(N) / L``, ``t -> t gamma / L``.

    ``mu`` defaults to ``params.mu`` and sets ``L = ln(1/mu)``.
    """
    if not trajectory.samples:
        raise InvalidParams("empty trajectory")
    p = params if mu is None else params.replace(mu=mu)
    L = log_scale(p).L
    unit = p.gamma / L
    t = trajectory.times * unit
    types = sorted({j for s in trajectory.samples for j in s.counts})
    Y = {j: log_plus(trajectory.counts_of(j)) / L for j in types}
    F = np.log(trajectory.sizes.astype(float)) / L
    births = {k: tk * unit for k, tk in trajectory.first_appearance.items()}
    return RescaledTrajectory(t, Y, F, births, L, p)


@dataclass
class CellReport:
    """Statistics over the replicates run at one mutation rate."""

    mu: float
    L: float
    replicates: int
    deviations: dict
    birth_errors: dict
    gaps: dict

    @staticmethod
    def _stats(values) -> dict:
        v = np.asarray([x for x in values if np.isfinite(x)])
        if v.size == 0:
            return {"median": math.nan, "iqr": math.nan, "n": 0}
        q1, med, q3 = np.percentile(v, [25, 50, 75])
        return {"median": float(med), "iqr": float(q3 - q1), "n": int(v.size)}

    def deviation_stats(self) -> dict:
        return {key: self._stats(v) for key, v in self.deviations.items()}

    def birth_stats(self) -> dict:
        return {k: self._stats(v) for k, v in self.birth_errors.items()}

    def gap_stats(self) -> dict:
        return {k: self._stats(v) for k, v in self.gaps.items()}


@dataclass
class ConvergenceReport:
    cells: list
    windows: list
    epsilon: float
    limit_births: dict
    limit_gaps: dict
    monotone: dict = field(default_factory=dict)

    @property
    def consistent(self) -> bool:
        """True iff every tracked median is non-increasing along the mu grid."""
        return all(self.monotone.values()) if self.monotone else False

    @property
    def verdict(self) -> str:
        return "consistent with convergence" if self.consistent else "not monotone"

    def median_deviation(self, j: int, window) -> list:
        return [c.deviation_stats()[(j, tuple(window))]["median"] for c in self.cells]

    def median_birth_error(self, k: int) -> list:
        return [c.birth_stats()[k]["median"] for c in self.cells]

    def to_dict(self) -> dict:
        cells = []
        for c in self.cells:
            cells.append({
                "mu": c.mu,
                "L": c.L,
                "replicates": c.replicates,
                "deviation": [{"type": j, "window": list(w), **s}
                              for (j, w), s in c.deviation_stats().items()],
                "birth_error": {str(k): s for k, s in c.birth_stats().items()},
                "gap": {str(k): s for k, s in c.gap_stats().items()},
            })
        return {
            "windows": [list(w) for w in self.windows],
            "epsilon": self.epsilon,
            "limit_births": {str(k): v for k, v in self.limit_births.items()},
            "limit_gaps": {str(k): v for k, v in self.limit_gaps.items()},
            "monotone": {str(k): v for k, v in self.monotone.items()},
            "verdict": self.verdict,
            "cells": cells,
        }


def check_windows(path: PiecewisePath, windows, epsilon: float) -> list:
    """Validate windows against the path's event times.

    Windows must lie in ``(0, end_time]``; the part within ``epsilon`` of
    ``t = 0`` is clipped off. A window that comes within ``epsilon`` of an
    event time raises :class:`WindowOverlapsEvent`.
    """
    out = []
    for a, b in windows:
        if not 0 <= a < b <= path.end_time:
            raise InvalidParams(f"window ({a}, {b}) is not inside (0, {path.end_time}]")
        for s in path.event_times:
            if a - epsilon < s < b + epsilon:
                raise WindowOverlapsEvent(
                    f"event at {s} lies within {epsilon} of window ({a}, {b})")
        out.append((max(a, epsilon), b))
    return out


def sup_deviation(rt: RescaledTrajectory, path: PiecewisePath, j: int, window) -> float:
    """``max |Y_j(t) - y_j(t)|`` over the samples of ``rt`` inside ``window``."""
    a, b = window
    sel = (rt.t >= a) & (rt.t <= b)
    if not sel.any():
        return math.nan
    Yj = rt.y(j)[sel]
    yj = np.array([eval_path(path, j, float(t)) for t in rt.t[sel]])
    return float(np.max(np.abs(Yj - yj)))


def compare(cells, path: PiecewisePath, windows, epsilon: float = DEFAULT_EPSILON,
            types=(1,), birth_types=(2, 3)) -> ConvergenceReport:
    """Deviation statistics of rescaled replicates from ``path``.

    Parameters
    ----------
    cells : list of (mu, list of RescaledTrajectory)
        One entry per mutation rate, in decreasing order of ``mu``.
    path : PiecewisePath
        Limit path with the same ``gamma``, ``alpha`` and ``rho``.
    windows : list of (a, b)
        Scaled-time windows for the sup-norm deviations.
    epsilon : float
        Exclusion radius around ``t = 0`` and the event times.
    types, birth_types : iterable of int
        Types tracked in the deviations and in the birth-time errors.
    """
    mus = [mu for mu, _ in cells]
    if any(b >= a for a, b in zip(mus, mus[1:])):
        raise InvalidParams("the mu grid must be strictly decreasing")
    eff = check_windows(path, windows, epsilon)
    limit_b = {bt.k: bt.b for bt in birth_times(path)}
    limit_gap = {bt.k: bt.gap for bt in birth_times(path)}
    reports = []
    for mu, replicas in cells:
        devs = {}
        for j in types:
            for w, we in zip(windows, eff):
                devs[(j, tuple(w))] = [sup_deviation(rt, path, j, we) for rt in replicas]
        berr = {}
        gaps = {}
        for k in birth_types:
            if k not in limit_b:
                raise OutOfHorizon(f"type {k} is not born within the path horizon")
            berr[k] = [abs(rt.births[k] - limit_b[k]) if k in rt.births else math.nan
                       for rt in replicas]
            gaps[k] = [rt.births[k] - rt.births[k - 1]
                       if k in rt.births and k - 1 in rt.births else math.nan
                       for rt in replicas]
        L = replicas[0].L if replicas else -math.log(mu)
        reports.append(CellReport(mu, L, len(replicas), devs, berr, gaps))
    report = ConvergenceReport(reports, [tuple(w) for w in windows], epsilon,
                               {k: limit_b[k] for k in birth_types},
                               {k: limit_gap[k] for k in birth_types})
    for key in reports[0].deviations if reports else ():
        med = [c.deviation_stats()[key]["median"] for c in reports]
        report.monotone[("deviation",) + key] = _non_increasing(med)
    for k in birth_types:
        med = [c.birth_stats()[k]["median"] for c in reports]
        report.monotone[("birth", k)] = _non_increasing(med)
    return report


def _non_increasing(values) -> bool:
    return all(np.isfinite(values)) and all(b <= a for a, b in zip(values, values[1:]))


def beerenwinkel_estimate(j: int, params: ModelParams, N0: float, N_at_T: float,
                          moran_adjust: bool = False) -> float:
    """Waiting time ``j (log(gamma/mu))**2 / (gamma log(N0 N_at_T))``.

    The estimate is linear in ``j`` by construction. With ``moran_adjust``
    both ``gamma`` and ``mu`` are halved first, converting the discrete
    generation model to Moran time.
    """
    if N0 < 1 or N_at_T < 1:
        raise InvalidParams("population sizes must be >= 1")
    g, mu = params.gamma, params.mu
    if moran_adjust:
        g, mu = g / 2, mu / 2
    if g <= mu:
        raise DegenerateLog(f"log(gamma/mu) <= 0 for gamma={g}, mu={mu}")
    log_n = math.log(N0) + math.log(N_at_T)
    if log_n <= 0:
        raise DegenerateLog("log(N0 * N(T)) must be positive")
    return j * math.log(g / mu) ** 2 / (g * log_n)


@dataclass
class SweepSolution:
    t: np.ndarray
    r: np.ndarray
    lambda_rel: float
    gamma_rel: float

    def at(self, t) -> np.ndarray:
        return np.interp(t, self.t, self.r)

    def crossing(self, level: float) -> float:
        """First time ``r`` reaches ``level`` (linear interpolation)."""
        i = int(np.searchsorted(self.r, level))
        if i == 0:
            return float(self.t[0])
        if i >= self.r.size:
            raise OutOfHorizon(f"r never reaches {level} before t={self.t[-1]}")
        r0, r1 = self.r[i - 1], self.r[i]
        return float(self.t[i - 1] + (level - r0) / (r1 - r0) * (self.t[i] - self.t[i - 1]))

    def transit_time(self, L: float) -> float:
        """Time to climb from ``L**-2`` to ``1 - L**-2``."""
        return self.crossing(1 - L ** -2) - self.crossing(L ** -2)

    def transit_bound(self, L: float) -> float:
        """Upper bound ``(4/beta) log L`` with ``beta = lambda / (1 + gamma_rel)``."""
        beta = self.lambda_rel / (1 + self.gamma_rel)
        return 4 / beta * math.log(L)

    def sandwich_ok(self, L: float) -> bool:
        """Per-capita growth lies between the two logistic rates on ``[L**-2, 1 - L**-2]``."""
        r = self.r[(self.r >= L ** -2) & (self.r <= 1 - L ** -2)]
        rate = sweep_rhs(r, self.lambda_rel, self.gamma_rel) / r
        lo = (1 - r) * self.lambda_rel / (1 + self.gamma_rel)
        hi = (1 - r) * self.lambda_rel
        tol = 1e-12 * self.lambda_rel
        return bool(np.all(rate >= lo - tol) and np.all(rate <= hi + tol))


def sweep_rhs(r, lambda_rel: float, gamma_rel: float):
    return r * (1 - r) * lambda_rel / (1 + gamma_rel * r)


def logistic(t, lam: float, r0: float):
    """Closed-form solution of ``r' = lam r (1 - r)``."""
    e = np.exp(lam * np.asarray(t, dtype=float))
    return r0 * e / (1 - r0 + r0 * e)


def sweep_ode_solve(lambda_rel: float, gamma_rel: float, r0: float, horizon: float,
                    step: float) -> SweepSolution:
    """Classical RK4 for ``r' = r (1 - r) lambda / (1 + gamma_rel r)``.

    Raises :class:`StepTooLarge` if the numerical solution stops being
    monotone or leaves ``(0, 1]``.
    """
    if not 0 < r0 < 1:
        raise InvalidParams("r0 must lie in (0, 1)")
    if not lambda_rel > 0 or not step > 0 or horizon < 0:
        raise InvalidParams("need lambda_rel > 0, step > 0 and horizon >= 0")
    if gamma_rel < 0:
        raise InvalidParams("gamma_rel must be >= 0")
    n = int(math.ceil(horizon / step - 1e-9))
    t = np.arange(n + 1) * step
    r = np.empty(n + 1)
    r[0] = r0
    x = r0
    h = step
    f = sweep_rhs
    for i in range(n):
        k1 = f(x, lambda_rel, gamma_rel)
        k2 = f(x + 0.5 * h * k1, lambda_rel, gamma_rel)
        k3 = f(x + 0.5 * h * k2, lambda_rel, gamma_rel)
        k4 = f(x + h * k3, lambda_rel, gamma_rel)
        nxt = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not (x <= nxt <= 1.0):
            raise StepTooLarge(f"non-monotone step at t={t[i]} (r={x} -> {nxt}); reduce step")
        if nxt == x and x < 1 - 1e-12:
            raise StepTooLarge(f"solution stalled at r={x}, t={t[i]}")
        r[i + 1] = x = nxt
    return SweepSolution(t, r, lambda_rel, gamma_rel)


def sweep_alignment_error(t, freq, sol: SweepSolution, lo: float = 0.05, hi: float = 0.95) -> float:
    """Sup distance between a sampled sweep and ``sol`` after 50 % alignment.

    ``freq`` is sampled at raw times ``t``. The simulated curve is shifted
    so that its first 50 % crossing coincides with the ODE's, then compared
    (by linear interpolation) at the ODE grid points where ``lo <= r <= hi``.
    A sweep that never reaches 50 %, or whose samples stop before the
    aligned window ends, scores ``inf``.
    """
    t = np.asarray(t, dtype=float)
    freq = np.asarray(freq, dtype=float)
    above = np.flatnonzero(freq >= 0.5)
    if not above.size:
        return math.inf
    i = int(above[0])
    if i == 0:
        t50 = t[0]
    else:
        f0, f1 = freq[i - 1], freq[i]
        t50 = t[i - 1] + (0.5 - f0) / (f1 - f0) * (t[i] - t[i - 1])
    shift = t50 - sol.crossing(0.5)
    sel = (sol.r >= lo) & (sol.r <= hi)
    probe = sol.t[sel] + shift
    if probe[0] < t[0] or probe[-1] > t[-1]:
        return math.inf
    return float(np.max(np.abs(np.interp(probe, t, freq) - sol.r[sel])))


def type_distribution_snapshot(source, times, L: float | None = None) -> list:
    """Normalised type distributions at the given times.

    For a :class:`Trajectory` (raw times) the last sample at or before each
    time is used. For a :class:`PiecewisePath` (scaled times) type ``j``
    gets weight ``exp(L y_j(t))``, with ``L`` defaulting to
    ``ln(1/params.mu)``. Returns one ``{type: probability}`` dict per time.
    """
    out = []
    if isinstance(source, PiecewisePath):
        if L is None:
            L = log_scale(source.params).L
        for t in times:
            if not 0 <= t <= source.end_time:
                raise OutOfHorizon(f"t={t} outside [0, {source.end_time}]")
            ys = {j: eval_path(source, j, t) for j in source.segments}
            ys = {j: y for j, y in ys.items() if y > 0 or j == 0}
            top = max(ys.values())
            w = {j: math.exp(L * (y - top)) for j, y in ys.items() if y > 0}
            if not w:
                w = {0: 1.0}
            z = math.fsum(w.values())
            out.append({j: v / z for j, v in sorted(w.items())})
        return out
    if isinstance(source, Trajectory):
        ts = source.times
        for t in times:
            if t < 0 or t > ts[-1]:
                raise OutOfHorizon(f"t={t} outside [0, {ts[-1]}]")
            i = int(np.searchsorted(ts, t, side="right")) - 1
            counts = source.samples[i].counts
            z = sum(counts.values())
            out.append({j: c / z for j, c in sorted(counts.items())})
        return out
    raise InvalidParams("source must be a Trajectory or a PiecewisePath")


def snapshot_shift_error(a: dict, b: dict, shift: int) -> float:
    """``max_j |a[j] - b[j + shift]|`` over the union of supports."""
    keys = set(a) | {j - shift for j in b}
    return max(abs(a.get(j, 0.0) - b.get(j + shift, 0.0)) for j in keys)
